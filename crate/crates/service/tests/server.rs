use std::net::TcpStream;
use std::sync::atomic::AtomicBool;
use std::thread;
use std::time::{Duration, Instant};

use ngp_core::math::Aabb;
use ngp_core::render::{Eye, Image, RenderSettings, StereoRig};
use ngp_service::session::run_loop;
use ngp_service::{decode_frame, Encoding, Server, ServerMessage, Session, StereoSource, TickOutput, ViewState};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

struct Stub {
    delay: Duration,
}

impl StereoSource for Stub {
    fn render(&self, rig: &StereoRig<f32>, s: &RenderSettings<f32>) -> Result<(Image, Image), String> {
        thread::sleep(self.delay);
        let v = rig.head_pose.position.x.clamp(0.0, 1.0);
        Ok((Image::filled(s.width, s.height, [v, 0.0, 0.0]), Image::filled(s.width, s.height, [0.0, v, 0.0])))
    }
}

fn session(delay_ms: u64, encoding: Encoding) -> Session {
    let view = ViewState::looking_at_origin(3.0, 1.0, RenderSettings::new(32, 24, Aabb::centered_cube(2.0))).unwrap();
    Session::new(Box::new(Stub { delay: Duration::from_millis(delay_ms) }), view, encoding).unwrap()
}

#[test]
fn stub_renderer_sustains_one_hundred_ticks_per_second() {
    let s = session(5, Encoding::Png);
    let stop = AtomicBool::new(false);
    let start = Instant::now();
    let mut last = None;
    let ticks = run_loop(&s, 1000.0, &stop, |out| {
        if let Some(prev) = last {
            assert_eq!(out.frame_id(), prev + 1);
        }
        last = Some(out.frame_id());
        assert!(matches!(out, TickOutput::Frames { .. }));
        if start.elapsed() >= Duration::from_secs(2) {
            stop.store(true, std::sync::atomic::Ordering::Relaxed);
        }
    });
    let rate = ticks as f64 / start.elapsed().as_secs_f64();
    assert!(rate >= 100.0, "{rate:.1} ticks/s");
}

#[test]
fn run_loop_respects_tick_rate() {
    let s = session(0, Encoding::RawRgb8);
    let stop = AtomicBool::new(false);
    let start = Instant::now();
    let ticks = run_loop(&s, 20.0, &stop, |_| {
        if start.elapsed() >= Duration::from_millis(500) {
            stop.store(true, std::sync::atomic::Ordering::Relaxed);
        }
    });
    assert!((9..=12).contains(&ticks), "{ticks}");
}

fn connect(addr: std::net::SocketAddr) -> WebSocket<MaybeTlsStream<TcpStream>> {
    let (ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    }
    ws
}

#[test]
fn client_receives_frames_and_controls_the_session() {
    let handle = Server::bind("127.0.0.1:0", session(1, Encoding::Png), 60.0).unwrap().spawn().unwrap();
    let mut ws = connect(handle.local_addr());
    let start = Instant::now();

    let mut first = None;
    while first.is_none() {
        if let Message::Binary(b) = ws.read().unwrap() {
            first = Some(decode_frame(&b).unwrap());
        }
    }
    assert!(start.elapsed() < Duration::from_secs(1));
    let first = first.unwrap();
    assert_eq!((first.header.width, first.header.height), (32, 24));

    ws.send(Message::text(r#"{"type":"ipd","meters":-1}"#)).unwrap();
    ws.send(Message::text(r#"{"type":"stats","subscribe":true}"#)).unwrap();
    ws.send(Message::text(r#"{"type":"pose","position":[1,0,3],"orientation":[0,0,0,1]}"#)).unwrap();
    ws.send(Message::text(r#"{"type":"settings","width":16,"height":8}"#)).unwrap();

    let mut error = false;
    let mut stats = false;
    let mut last_id: Option<(u32, Eye)> = None;
    let mut updated = false;
    while !(error && stats && updated) {
        assert!(start.elapsed() < Duration::from_secs(5), "error {error} stats {stats} updated {updated}");
        match ws.read().unwrap() {
            Message::Text(t) => match serde_json::from_str::<ServerMessage>(&t).unwrap() {
                ServerMessage::Error { frame: None, .. } => error = true,
                ServerMessage::Stats { fps, frame_ms, .. } => {
                    assert!(fps > 0.0 && frame_ms > 0.0);
                    stats = true;
                }
                other => panic!("{other:?}"),
            },
            Message::Binary(b) => {
                let f = decode_frame(&b).unwrap();
                if let Some((id, eye)) = last_id {
                    match eye {
                        Eye::Left => assert_eq!((f.header.frame_id, f.header.eye), (id, Eye::Right)),
                        Eye::Right => assert!(f.header.frame_id > id && f.header.eye == Eye::Left),
                    }
                }
                last_id = Some((f.header.frame_id, f.header.eye));
                if f.header.width == 16 {
                    assert_eq!(f.header.height, 8);
                    let px = f.rgb8().unwrap();
                    if f.header.eye == Eye::Left {
                        assert_eq!(&px[..3], &[255, 0, 0]);
                    }
                    updated = true;
                }
            }
            _ => {}
        }
    }
    ws.close(None).unwrap();
    handle.shutdown().unwrap();
}

#[test]
fn clients_share_one_render_loop() {
    let handle = Server::bind("127.0.0.1:0", session(1, Encoding::RawRgb8), 30.0).unwrap().spawn().unwrap();
    let mut a = connect(handle.local_addr());
    let mut b = connect(handle.local_addr());
    let ids = |ws: &mut WebSocket<_>| {
        let mut seen = Vec::new();
        while seen.len() < 6 {
            if let Message::Binary(m) = ws.read().unwrap() {
                seen.push(decode_frame(&m).unwrap().header.frame_id);
            }
        }
        seen
    };
    let (ia, ib) = (ids(&mut a), ids(&mut b));
    assert!(ia.windows(2).all(|w| w[1] >= w[0]));
    assert!(ib.windows(2).all(|w| w[1] >= w[0]));
    drop(a);
    drop(b);
    handle.shutdown().unwrap();
}

#[test]
fn bad_tick_rate_is_rejected() {
    assert!(Server::bind("127.0.0.1:0", session(0, Encoding::Png), 0.0).is_err());
}
