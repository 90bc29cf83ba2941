//! Render session server: applies streamed pose and settings updates to a
//! loaded scene, renders stereo frames at a fixed tick rate and streams them
//! to viewers over WebSocket.

pub mod control;
pub mod server;
pub mod session;
pub mod wire;

pub use control::{parse_control, Control, ControlError, ControlMessage, ServerMessage};
pub use server::{Server, ServerHandle, ServiceError, DEFAULT_TICK_RATE};
pub use session::{FieldSource, Session, SessionError, StereoSource, TickOutput, ViewState};
pub use wire::{decode_frame, encode_frame, Encoding, FrameHeader, FrameMessage, WireError, HEADER_LEN};
