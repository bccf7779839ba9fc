//! Analytic storage cost of the reservation schemes.
//!
//! Identifier bits are the ⌈log₂ n⌉-bit core ids stored in queues or
//! head/tail/successor registers. Control bits are the per-entry flags and
//! address registers each scheme needs on top:
//!
//! * ideal / bounded: one valid bit per queue entry, plus one reservation
//!   valid bit and one [`ADDRESS_BITS`]-wide address register per bank;
//! * Colibri: per slot an occupied bit, a head-valid bit, a reservation
//!   valid bit and an address register; per QNode a successor-valid bit.

use crate::error::SimError;
use crate::types::ceil_log2;

/// Width of a stored word address.
pub const ADDRESS_BITS: u64 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostScheme {
    Ideal,
    Bounded { q: u64 },
    Colibri { addresses_per_bank: u64 },
}

impl std::str::FromStr for CostScheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.parse::<crate::adapter::AdapterKind>()? {
            crate::adapter::AdapterKind::LrscWaitIdeal => Ok(CostScheme::Ideal),
            crate::adapter::AdapterKind::LrscWaitBounded { q } => Ok(CostScheme::Bounded { q: q.into() }),
            crate::adapter::AdapterKind::Colibri { addresses_per_bank } => {
                Ok(CostScheme::Colibri { addresses_per_bank: addresses_per_bank.into() })
            }
            other => Err(format!("no reservation storage model for `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StorageCost {
    pub identifier_bits: u64,
    pub control_bits: u64,
}

impl StorageCost {
    pub fn total(&self) -> u64 {
        self.identifier_bits + self.control_bits
    }
}

pub fn cost_model(scheme: CostScheme, n_cores: u64, n_banks: u64) -> Result<StorageCost, SimError> {
    if n_cores == 0 || n_banks == 0 {
        return Err(SimError::Config("cost model needs positive core and bank counts".into()));
    }
    let id = u64::from(ceil_log2(n_cores));
    let per_bank_register = 1 + ADDRESS_BITS;
    Ok(match scheme {
        CostScheme::Ideal => StorageCost {
            identifier_bits: n_cores * id * n_banks,
            control_bits: (n_cores + per_bank_register) * n_banks,
        },
        CostScheme::Bounded { q } => {
            if q == 0 {
                return Err(SimError::Config("bounded scheme needs q >= 1".into()));
            }
            StorageCost { identifier_bits: q * id * n_banks, control_bits: (q + per_bank_register) * n_banks }
        }
        CostScheme::Colibri { addresses_per_bank } => {
            if addresses_per_bank == 0 {
                return Err(SimError::Config("colibri needs addresses_per_bank >= 1".into()));
            }
            StorageCost {
                identifier_bits: n_cores * id + 2 * addresses_per_bank * id * n_banks,
                control_bits: n_cores + addresses_per_bank * (3 + ADDRESS_BITS) * n_banks,
            }
        }
    })
}
