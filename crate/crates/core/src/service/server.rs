//! WebSocket transport: JSON text for controls and stats, binary frames.

use super::protocol::ServerText;
use super::session::SessionTemplate;
use crate::error::{Error, Result};
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::time::{Duration, Instant};
use tungstenite::{Message, WebSocket};

#[derive(Clone, Debug)]
pub struct ServeOptions {
    /// Upper bound on the frame rate; `None` renders back to back.
    pub max_fps: Option<f64>,
    /// End each session after this many frames.
    pub max_frames: Option<u32>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            max_fps: Some(30.0),
            max_frames: None,
        }
    }
}

pub struct Server {
    listener: TcpListener,
    template: Arc<SessionTemplate>,
    options: ServeOptions,
}

fn ws_err(e: tungstenite::Error) -> Error {
    match e {
        tungstenite::Error::Io(io) => Error::Io(io),
        other => Error::Protocol(other.to_string()),
    }
}

impl Server {
    pub fn bind(
        addr: impl ToSocketAddrs,
        template: SessionTemplate,
        options: ServeOptions,
    ) -> Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            template: Arc::new(template),
            options,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts connections forever, one render thread per session.
    pub fn run(&self) -> Result<()> {
        for stream in self.listener.incoming() {
            let stream = stream?;
            let template = self.template.clone();
            let options = self.options.clone();
            std::thread::spawn(move || {
                if let Err(e) = run_session(stream, &template, &options) {
                    eprintln!("session ended: {e}");
                }
            });
        }
        Ok(())
    }

    /// Serves exactly one connection on the calling thread.
    pub fn serve_one(&self) -> Result<()> {
        let (stream, _) = self.listener.accept()?;
        run_session(stream, &self.template, &self.options)
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn closed(e: &tungstenite::Error) -> bool {
    matches!(
        e,
        tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed
    ) || matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::BrokenPipe | ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted))
}

/// Runs one viewer session until the client goes away, the frame budget is
/// spent, or rendering fails (reported to the client before closing).
pub fn run_session(
    stream: TcpStream,
    template: &SessionTemplate,
    options: &ServeOptions,
) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut ws: WebSocket<TcpStream> =
        tungstenite::accept(stream).map_err(|e| Error::Protocol(e.to_string()))?;
    ws.get_mut()
        .set_read_timeout(Some(Duration::from_millis(1)))?;
    let mut session = template.open()?;
    let period = options.max_fps.map(|f| Duration::from_secs_f64(1.0 / f));
    let mut frames = 0u32;
    loop {
        let start = Instant::now();
        // drain every control that arrived since the last frame
        loop {
            match ws.read() {
                Ok(Message::Text(t)) => {
                    if let Err(e) = session.handle_text(&t) {
                        let msg = ServerText::Error {
                            message: e.to_string(),
                        };
                        ws.send(Message::Text(msg.encode())).map_err(ws_err)?;
                    }
                }
                Ok(Message::Close(_)) => {
                    let _ = ws.flush();
                    return Ok(());
                }
                Ok(_) => {}
                Err(e) if is_timeout(&e) => break,
                Err(e) if closed(&e) => return Ok(()),
                Err(e) => return Err(ws_err(e)),
            }
        }
        let frame = match session.step() {
            Ok(f) => f,
            Err(e) => {
                let msg = ServerText::Error {
                    message: e.to_string(),
                };
                let _ = ws.send(Message::Text(msg.encode()));
                let _ = ws.close(None);
                let _ = ws.flush();
                return Err(e);
            }
        };
        let sent = ws
            .send(Message::Binary(frame.frame.encode()))
            .and_then(|_| ws.send(Message::Text(ServerText::Stats(frame.stats).encode())));
        match sent {
            Ok(()) => {}
            Err(e) if closed(&e) => return Ok(()),
            Err(e) => return Err(ws_err(e)),
        }
        frames += 1;
        if options.max_frames.is_some_and(|m| frames >= m) {
            let _ = ws.close(None);
            // let the close handshake finish
            for _ in 0..100 {
                match ws.read() {
                    Err(e) if is_timeout(&e) => continue,
                    Err(_) => break,
                    Ok(_) => {}
                }
            }
            return Ok(());
        }
        if let Some(p) = period {
            let spent = start.elapsed();
            if spent < p {
                std::thread::sleep(p - spent);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::protocol::{FrameMessage, ServerText};
    use super::super::session::tests::template;
    use super::*;

    #[test]
    fn localhost_session_streams_frames_and_stats() {
        let server = Server::bind(
            "127.0.0.1:0",
            template(),
            ServeOptions {
                max_fps: None,
                max_frames: Some(6),
            },
        )
        .unwrap();
        let addr = server.local_addr().unwrap();
        let handle = std::thread::spawn(move || server.serve_one());
        let (mut ws, _) = tungstenite::connect(format!("ws://{addr}/")).unwrap();
        ws.send(Message::Text(r#"{"type":"lod_scale","value":0.1}"#.into()))
            .unwrap();
        ws.send(Message::Text(r#"{"type":"nonsense"}"#.into()))
            .unwrap();
        let (mut frames, mut stats, mut errors) = (Vec::new(), Vec::new(), 0);
        loop {
            match ws.read() {
                Ok(Message::Binary(b)) => frames.push(FrameMessage::decode(&b).unwrap()),
                Ok(Message::Text(t)) => match ServerText::decode(&t).unwrap() {
                    ServerText::Stats(s) => stats.push(s),
                    ServerText::Error { .. } => errors += 1,
                },
                Ok(_) => {}
                Err(_) => break,
            }
        }
        handle.join().unwrap().unwrap();
        assert_eq!(frames.len(), 6);
        assert_eq!(stats.len(), 6);
        assert_eq!(errors, 1);
        assert!(frames.windows(2).all(|w| w[1].frame > w[0].frame));
        assert!(frames.iter().zip(&stats).all(|(f, s)| f.frame == s.frame));
    }
}
