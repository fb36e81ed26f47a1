mod common;

use std::sync::Arc;
use std::time::Instant;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use refocus_cli::server::{router, ServerConfig, SessionCreated, FOCUS_HEADER};
use refocus_core::io::{decode_png, load_disparity};

const BOUNDARY: &str = "refocus-test-boundary";

fn multipart(parts: &[(&str, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, bytes) in parts {
        body.extend_from_slice(
            format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}\"\r\n\r\n")
                .as_bytes(),
        );
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec();
    (status, headers, body)
}

fn session_request(parts: &[(&str, &[u8])]) -> Request<Body> {
    Request::post("/session")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(multipart(parts)))
        .unwrap()
}

fn json_request(uri: &str, v: &Value) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(serde_json::to_vec(v).unwrap()))
        .unwrap()
}

struct Inputs {
    _f: common::Fixture,
    image: Vec<u8>,
    disparity: Vec<u8>,
}

fn inputs() -> Inputs {
    let f = common::fixture();
    Inputs {
        image: std::fs::read(&f.image).unwrap(),
        disparity: std::fs::read(&f.disparity).unwrap(),
        _f: f,
    }
}

async fn new_session(app: &Router, inp: &Inputs) -> SessionCreated {
    let (status, _, body) = send(
        app,
        session_request(&[("image", &inp.image), ("disparity", &inp.disparity)]),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    serde_json::from_slice(&body).unwrap()
}

fn error_of(body: &[u8]) -> String {
    let v: Value = serde_json::from_slice(body).expect("JSON error body");
    v["error"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn health() {
    let app = router(&ServerConfig::default());
    let (s, _, b) = send(&app, Request::get("/health").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<Value>(&b).unwrap(), json!({"ok": true}));
}

#[tokio::test]
async fn session_render_contract() {
    let app = router(&ServerConfig::default());
    let inp = inputs();
    let s = new_session(&app, &inp).await;
    assert_eq!((s.width, s.height), (common::W, common::H));

    let (st, h, png) = send(&app, json_request("/render", &json!({"id": s.id, "A": 0, "d_f": 0.5}))).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(h["content-type"], "image/png");
    assert_eq!(decode_png(&png).unwrap(), decode_png(&inp.image).unwrap());

    let (st, h, png) = send(
        &app,
        json_request(
            "/render",
            &json!({"id": s.id, "A": 30, "focus": {"x": 40, "y": 40}, "gamma": 2.0}),
        ),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    let d_f: f64 = h[FOCUS_HEADER].to_str().unwrap().parse().unwrap();
    assert!((d_f - common::FG_D).abs() < 1e-3, "{d_f}");
    assert_ne!(decode_png(&png).unwrap(), decode_png(&inp.image).unwrap());
}

#[tokio::test]
async fn disparity_lookup_is_bilinear() {
    let app = router(&ServerConfig::default());
    let inp = inputs();
    let s = new_session(&app, &inp).await;
    let d = load_disparity(&inp._f.disparity).unwrap();
    // Halfway across the square's left edge.
    let (x, y) = (common::FG_X as f64 - 0.5, 40.25);
    let uri = format!("/disparity?id={}&x={x}&y={y}", s.id);
    let (st, _, b) = send(&app, Request::get(uri).body(Body::empty()).unwrap()).await;
    assert_eq!(st, StatusCode::OK);
    let got = serde_json::from_slice::<Value>(&b).unwrap()["d"].as_f64().unwrap();
    assert_eq!(got, d.sample_bilinear(x, y) as f64);
    assert!((got - 0.45).abs() < 1e-3, "{got}");
}

#[tokio::test]
async fn second_render_reuses_the_stack() {
    let app = router(&ServerConfig::default());
    let inp = inputs();
    let t = Instant::now();
    let s = new_session(&app, &inp).await;
    let req = json!({"id": s.id, "A": 20, "d_f": 0.2});
    let (st, _, first) = send(&app, json_request("/render", &req)).await;
    let build_and_first = t.elapsed();
    assert_eq!(st, StatusCode::OK);
    let t = Instant::now();
    let (_, _, second) = send(&app, json_request("/render", &req)).await;
    let second_time = t.elapsed();
    assert_eq!(first, second);
    assert!(second_time < build_and_first, "{second_time:?} vs {build_and_first:?}");
}

#[tokio::test]
async fn concurrent_renders_agree() {
    let app = router(&ServerConfig::default());
    let inp = inputs();
    let s = new_session(&app, &inp).await;
    let req = json!({"id": s.id, "A": 25, "d_f": 0.7});
    let app = Arc::new(app);
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let (app, req) = (app.clone(), req.clone());
            tokio::spawn(async move { send(&app, json_request("/render", &req)).await.2 })
        })
        .collect();
    let mut outs = Vec::new();
    for h in handles {
        outs.push(h.await.unwrap());
    }
    assert!(outs.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn lru_eviction_returns_gone() {
    let cfg = ServerConfig {
        max_sessions: 2,
        ..Default::default()
    };
    let app = router(&cfg);
    let inp = inputs();
    let a = new_session(&app, &inp).await;
    let b = new_session(&app, &inp).await;
    // Touch `a` so `b` is least recently used.
    let (st, _, _) = send(&app, json_request("/render", &json!({"id": a.id, "A": 0, "d_f": 0.5}))).await;
    assert_eq!(st, StatusCode::OK);
    let c = new_session(&app, &inp).await;
    for (id, want) in [
        (&a.id, StatusCode::OK),
        (&b.id, StatusCode::GONE),
        (&c.id, StatusCode::OK),
    ] {
        let (st, _, body) = send(&app, json_request("/render", &json!({"id": id, "A": 0, "d_f": 0.5}))).await;
        assert_eq!(st, want, "{id}");
        if st != StatusCode::OK {
            assert!(error_of(&body).contains("evicted"));
        }
    }
    let (st, _, body) = send(
        &app,
        json_request("/render", &json!({"id": "nope", "A": 0, "d_f": 0.5})),
    )
    .await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    error_of(&body);
}

#[tokio::test]
async fn malformed_requests_get_json_4xx() {
    let app = router(&ServerConfig::default());
    let inp = inputs();
    let s = new_session(&app, &inp).await;

    let cases: Vec<(Request<Body>, &str)> = vec![
        (
            Request::post("/render")
                .header("content-type", "application/json")
                .body(Body::from("{"))
                .unwrap(),
            "",
        ),
        (json_request("/render", &json!({"id": s.id, "d_f": 0.5})), "A"),
        (json_request("/render", &json!({"id": s.id, "A": 10})), "d_f"),
        (
            json_request("/render", &json!({"id": s.id, "A": -1, "d_f": 0.5})),
            "blur_amount",
        ),
        (
            json_request("/render", &json!({"id": s.id, "A": 1, "d_f": 1.5})),
            "refocus_disparity",
        ),
        (
            json_request("/render", &json!({"id": s.id, "A": 1, "d_f": 0.5, "gamma": 9})),
            "gamma",
        ),
        (
            json_request("/render", &json!({"id": s.id, "A": 1, "focus": {"x": 1e6, "y": 0}})),
            "focus",
        ),
        (
            json_request("/render", &json!({"id": s.id, "A": 1, "d_f": 0.5, "extra": 1})),
            "extra",
        ),
        (
            Request::get(format!("/disparity?id={}&x=abc&y=1", s.id))
                .body(Body::empty())
                .unwrap(),
            "x",
        ),
        (session_request(&[("image", &inp.image)]), "disparity"),
        (
            session_request(&[("image", b"not a png"), ("disparity", &inp.disparity)]),
            "image",
        ),
        (
            session_request(&[("image", &inp.image), ("disparity", &inp.disparity), ("planes", b"0")]),
            "plane",
        ),
        (
            session_request(&[("image", &inp.image), ("disparity", &inp.disparity), ("gamma", b"x")]),
            "gamma",
        ),
        (
            session_request(&[
                ("image", &inp.image),
                ("disparity", &inp.disparity),
                ("occlusion", b"{\"tau\":1}"),
            ]),
            "tau",
        ),
        (
            session_request(&[("image", &inp.image), ("disparity", &inp.disparity), ("bogus", b"1")]),
            "bogus",
        ),
        (Request::get("/nowhere").body(Body::empty()).unwrap(), "route"),
    ];
    for (req, needle) in cases {
        let uri = req.uri().to_string();
        let (st, _, body) = send(&app, req).await;
        assert!(st.is_client_error(), "{uri}: {st}");
        let msg = error_of(&body);
        assert!(msg.contains(needle), "{uri}: {msg:?} lacks {needle:?}");
    }
}

#[tokio::test]
async fn mismatched_dimensions_are_rejected() {
    let app = router(&ServerConfig::default());
    let inp = inputs();
    let small = refocus_core::io::encode_png(
        &refocus_core::DisparityMap::filled(10, 10, 0.5)
            .unwrap()
            .to_image(refocus_core::ColorSpace::Linear),
        refocus_core::io::BitDepth::Sixteen,
    );
    let (st, _, body) = send(&app, session_request(&[("image", &inp.image), ("disparity", &small)])).await;
    assert!(st.is_client_error());
    assert!(error_of(&body).contains("dimension"));
}

#[tokio::test]
async fn body_limit_applies() {
    let cfg = ServerConfig {
        body_limit: 1024,
        ..Default::default()
    };
    let app = router(&cfg);
    let inp = inputs();
    let (st, _, body) = send(
        &app,
        session_request(&[("image", &inp.image), ("disparity", &inp.disparity)]),
    )
    .await;
    assert!(st.is_client_error(), "{st}");
    error_of(&body);
}
