//! Typed messages, their line codec, and the agent/vehicle transports.

pub mod codec;
pub mod message;
pub mod transport;

pub use codec::{decode, encode, DecodeError, LineFramer};
pub use message::{
    ModuleId, MsgType, Payload, PlanningRequest, StateData, StateMessage, StrategyMsg, Telemetry, TypedMessage,
    VerificationMsg,
};
pub use transport::{connect, BusError, Endpoint, Link, TransportKind};
