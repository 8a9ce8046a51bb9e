//! Networking side of density-adaptive point cloud streaming: a shaped HTTP
//! origin, the adaptive client and the viewer bridge.

pub mod bridge;
pub mod client;
pub mod server;
pub mod throttle;

pub use bridge::{BridgeServer, Message, SharedGeometry, Viewport};
pub use client::{
    select_representation, AdaptationPolicy, CapPolicy, FrameRecord, SessionLog, StreamConfig,
    Streamer, ThroughputEstimator,
};
pub use server::{serve, ServeConfig, ServerHandle};
pub use throttle::Throttle;
