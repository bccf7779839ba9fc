use crate::message::MessageKind;
use crate::types::{BankId, CoreId, Cycle, Endpoint};

/// Errors raised by the simulator itself: contract violations of the model,
/// never outcomes of the simulated protocol (those are values or verdicts).
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("event scheduled at cycle {at} but the clock is already at {now}")]
    ScheduledInPast { at: Cycle, now: Cycle },
    #[error("channel {src} -> {dst} delivered out of send order")]
    ChannelOrder { src: Endpoint, dst: Endpoint },
    #[error("bank {bank:?} does not support {kind} requests")]
    Unsupported { bank: BankId, kind: MessageKind },
    #[error("core {core} issued a second outstanding wait request")]
    DuplicateWaiter { core: CoreId },
    #[error("invalid configuration: {0}")]
    Config(String),
}
