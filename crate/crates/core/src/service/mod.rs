//! Interactive viewer sessions over a WebSocket.

mod protocol;
mod server;
mod session;

pub use protocol::{
    ControlMessage, FrameFormat, FrameMessage, ServerText, StatsMessage, FRAME_HEADER_LEN,
    FRAME_MAGIC,
};
pub use server::{run_session, ServeOptions, Server};
pub use session::{AppliedState, Session, SessionFrame, SessionTemplate};
