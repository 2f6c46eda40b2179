use std::net::SocketAddr;
use std::thread;

use rainsim_client::{Client, ClientError};
use rainsim_core::config::SimConfig;
use rainsim_core::pipeline::Session;
use rainsim_core::protocol::ParamsUpdate;
use rainsim_core::synthetic::demo_scene;
use rainsim_service::{serve_on, ServiceOptions};

/// Run the service on its own runtime thread; returns its address and a
/// shutdown trigger.
fn start() -> (SocketAddr, tokio::sync::oneshot::Sender<()>, thread::JoinHandle<()>) {
    let (addr_tx, addr_rx) = std::sync::mpsc::channel();
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let server = thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            addr_tx.send(listener.local_addr().unwrap()).unwrap();
            let session = Session::new(demo_scene().unwrap(), SimConfig::default()).unwrap();
            serve_on(listener, session, ServiceOptions::default(), async move {
                let _ = stop_rx.await;
            })
            .await
            .unwrap();
        });
    });
    (addr_rx.recv().unwrap(), stop_tx, server)
}

#[test]
fn client_drives_the_service() {
    let (addr, stop, server) = start();
    let client = Client::new(format!("http://{addr}/")).unwrap();

    let s = client.state().unwrap();
    assert_eq!(s.params.view, "main");

    let echo = client.set_params(&ParamsUpdate { rain_intensity: Some(25.0), ..Default::default() }).unwrap();
    assert_eq!(echo.rain_intensity, 10.0);

    match client.set_params(&ParamsUpdate { view: Some("attic".into()), ..Default::default() }) {
        Err(ClientError::Rejected { status, detail }) => {
            assert_eq!(status.as_u16(), 404);
            assert_eq!(detail.field, "view");
        }
        other => panic!("expected a rejection, got {other:?}"),
    }

    let png = client.frame_png().unwrap();
    assert!(png.starts_with(b"\x89PNG"));
    client.reset().unwrap();

    stop.send(()).unwrap();
    server.join().unwrap();
}

#[test]
fn unreachable_service_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let client = Client::new(format!("http://{addr}")).unwrap();
    assert!(matches!(client.state(), Err(ClientError::Transport(_))));
}
