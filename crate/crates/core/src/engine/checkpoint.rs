//! Resumable run snapshots.
//!
//! File layout: the common frame header (`FSCK`, version, JSON metadata)
//! followed by the global model in the [`ParamVector`] binary format. The
//! metadata holds the completed round, the run seed (all random streams are
//! derived from `(seed, round)`, so this is the full RNG state), the strategy
//! state and the communication ledger.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::frame;
use crate::model::ParamVector;
use crate::selection::{CommLedger, StrategyKind};
use crate::Result;

const MAGIC: &[u8; 4] = b"FSCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub round: usize,
    pub seed: u64,
    pub strategy: StrategyKind,
    pub strategy_state: serde_json::Value,
    pub ledger: CommLedger,
    pub initial_loss: f64,
    pub params: ParamVector,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    round: usize,
    rng: RngState,
    strategy: StrategyKind,
    strategy_state: serde_json::Value,
    ledger: CommLedger,
    initial_loss: f64,
}

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: u64,
    next_round: usize,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let meta = Meta {
            round: self.round,
            rng: RngState {
                seed: self.seed,
                next_round: self.round + 1,
            },
            strategy: self.strategy,
            strategy_state: self.strategy_state.clone(),
            ledger: self.ledger.clone(),
            initial_loss: self.initial_loss,
        };
        frame::write_header(w, MAGIC, VERSION, &meta)?;
        self.params.write_to(w)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let (meta, _): (Meta, u64) = frame::read_header(r, MAGIC, VERSION)?;
        let params = ParamVector::read_from(r)?;
        Ok(Checkpoint {
            round: meta.round,
            seed: meta.rng.seed,
            strategy: meta.strategy,
            strategy_state: meta.strategy_state,
            ledger: meta.ledger,
            initial_loss: meta.initial_loss,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
