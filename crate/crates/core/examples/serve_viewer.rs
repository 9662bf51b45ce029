//! Starts the viewer service on a local port, connects a WebSocket client,
//! steers the camera and transfer function, and prints what comes back.
//! Pass `--listen` to keep serving for an external viewer instead.

use inrcache::engine::EngineConfig;
use inrcache::field::{make_procedural, Field, ProceduralKind};
use inrcache::harness::Orbit;
use inrcache::macrocell::MacroCellGrid;
use inrcache::math::Vec3;
use inrcache::render::{ControlPoint, TransferFunction};
use inrcache::service::{
    ControlMessage, FrameFormat, FrameMessage, ServeOptions, Server, ServerText, SessionTemplate,
};
use std::sync::Arc;
use tungstenite::Message;

fn main() -> inrcache::Result<()> {
    let dims = [64; 3];
    let field: Arc<dyn Field> = Arc::new(make_procedural(ProceduralKind::Shells, dims)?);
    let mut orbit = Orbit::around(dims, 0);
    orbit.width = 160;
    orbit.height = 120;
    let template = SessionTemplate {
        grid: MacroCellGrid::build(field.as_ref(), dims, 16)?,
        field,
        tf: TransferFunction::ramp([1.0; 3], 0.5),
        config: EngineConfig::default(),
        camera: orbit.camera(0),
        format: FrameFormat::Rgba8,
    };
    let listen = std::env::args().any(|a| a == "--listen");
    let options = ServeOptions {
        max_fps: Some(30.0),
        max_frames: (!listen).then_some(20),
    };
    let server = Server::bind("127.0.0.1:0", template, options)?;
    let addr = server.local_addr()?;
    if listen {
        println!("listening on ws://{addr}");
        return server.run();
    }
    let handle = std::thread::spawn(move || server.serve_one());

    let (mut ws, _) = tungstenite::connect(format!("ws://{addr}/"))
        .map_err(|e| inrcache::Error::Protocol(e.to_string()))?;
    let controls = [
        ControlMessage::Camera {
            position: Vec3::new(150.0, 80.0, 40.0),
            target: Vec3::splat(32.0),
            up: Vec3::new(0.0, 1.0, 0.0),
            fov: 45.0,
        },
        ControlMessage::Tf {
            points: TransferFunction::new(vec![
                ControlPoint::new(0.0, [0.0; 3], 0.0),
                ControlPoint::new(1.0, [1.0, 0.5, 0.2], 0.8),
            ])?,
        },
        ControlMessage::LodScale { value: 0.01 },
    ];
    for c in &controls {
        println!("-> {}", c.encode());
        ws.send(Message::Text(c.encode()))
            .map_err(|e| inrcache::Error::Protocol(e.to_string()))?;
    }
    while let Ok(msg) = ws.read() {
        match msg {
            Message::Binary(b) => {
                let f = FrameMessage::decode(&b)?;
                println!(
                    "<- frame {} {}x{} {:?}, {} bytes",
                    f.frame,
                    f.width,
                    f.height,
                    f.format,
                    f.payload.len()
                );
            }
            Message::Text(t) => match ServerText::decode(&t)? {
                ServerText::Stats(s) => println!(
                    "<- stats {:.1} fps, miss rate {:.3}, occupancy {:.3}",
                    s.fps, s.true_miss_rate, s.cache_occupancy
                ),
                ServerText::Error { message } => println!("<- error {message}"),
            },
            _ => {}
        }
    }
    handle.join().expect("server thread")?;
    Ok(())
}
