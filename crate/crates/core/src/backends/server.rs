//! Minimal HTTP server speaking the model protocol.
//!
//! [`ProtocolServer::serve_backends`] exposes any [`Backends`] (typically the
//! mock world) so the wire client can be exercised end to end.
//! [`ProtocolServer::with_handler`] accepts an arbitrary handler, which is how
//! tests script misbehaving servers.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use log::debug;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tiny_http::{Header, Response, Server};

use super::protocol::*;
use super::{BackendError, Backends};
use crate::types::{BBox, Point2D};

/// `(method, path, body) -> (status, JSON body)`.
pub type Handler = dyn Fn(&str, &str, &[u8]) -> (u16, String) + Send + Sync;

pub struct ProtocolServer {
    server: Arc<Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
}

impl ProtocolServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and serves `handler`
    /// on `threads` worker threads.
    pub fn with_handler(addr: &str, threads: usize, handler: Arc<Handler>) -> io::Result<Self> {
        let server = Server::http(addr).map_err(io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::other("server is not bound to an IP socket"))?;
        let server = Arc::new(server);
        let workers = (0..threads.max(1))
            .map(|_| {
                let server = Arc::clone(&server);
                let handler = Arc::clone(&handler);
                thread::spawn(move || {
                    for mut request in server.incoming_requests() {
                        let mut body = Vec::new();
                        let (status, text) = match request.as_reader().read_to_end(&mut body) {
                            Ok(_) => handler(&request.method().to_string(), request.url(), &body),
                            Err(e) => error(400, codes::BAD_REQUEST, e.to_string()),
                        };
                        debug!("{} {} -> {status}", request.method(), request.url());
                        let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
                        let response = Response::from_string(text).with_status_code(status).with_header(header);
                        let _ = request.respond(response);
                    }
                })
            })
            .collect();
        Ok(Self { server, addr, workers })
    }

    pub fn serve_backends(addr: &str, threads: usize, backends: Backends) -> io::Result<Self> {
        Self::with_handler(addr, threads, Arc::new(move |m: &str, p: &str, b: &[u8]| dispatch(&backends, m, p, b)))
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server is stopped from elsewhere.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(self) {}
}

impl Drop for ProtocolServer {
    fn drop(&mut self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn error(status: u16, code: &str, message: impl Into<String>) -> (u16, String) {
    (status, serde_json::to_string(&ErrorBody::new(code, message)).expect("serialisable"))
}

fn backend_error(e: BackendError) -> (u16, String) {
    match e {
        BackendError::NoDetection => error(422, codes::NO_DETECTION, e.to_string()),
        BackendError::Rejected(m) => error(400, codes::BAD_REQUEST, m),
        BackendError::Unavailable(m) => error(503, codes::UNAVAILABLE, m),
        BackendError::Protocol(m) => error(500, codes::INTERNAL, m),
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, (u16, String)> {
    serde_json::from_slice(body).map_err(|e| error(400, codes::BAD_REQUEST, format!("malformed request: {e}")))
}

fn ok<T: Serialize>(value: &T) -> Result<(u16, String), (u16, String)> {
    Ok((200, serde_json::to_string(value).expect("serialisable")))
}

/// Routes one request to the backends.
pub fn dispatch(backends: &Backends, method: &str, path: &str, body: &[u8]) -> (u16, String) {
    let bad = |m: String| error(400, codes::BAD_REQUEST, m);
    let result = (|| match (method, path) {
        ("GET", PATH_HEALTH) => ok(&HealthResponse {
            status: "ok".into(),
            models: serde_json::Map::new(),
        }),
        ("POST", PATH_GROUND) => {
            let req: GroundRequest = parse(body)?;
            let image = decode_image_b64(&req.image).map_err(bad)?;
            let b = backends.grounding.ground(&image, &req.sentence).map_err(backend_error)?;
            ok(&GroundResponse {
                bbox: [b.x_min, b.y_min, b.x_max, b.y_max].map(f64::from),
            })
        }
        ("POST", PATH_SEGMENT) => {
            let req: SegmentRequest = parse(body)?;
            let image = decode_image_b64(&req.image).map_err(bad)?;
            let [x0, y0, x1, y1] = req.bbox;
            let bbox = BBox::new(x0, y0, x1, y1, image.width(), image.height()).map_err(|e| bad(e.to_string()))?;
            let points: Vec<Point2D> = req.points.iter().map(|[x, y]| Point2D::new(*x, *y)).collect();
            if let Some(p) = points.iter().find(|p| !p.is_inside_image(image.width(), image.height())) {
                return Err(bad(format!("point ({}, {}) outside image", p.x, p.y)));
            }
            let mask = backends.segmentation.segment(&image, bbox, &points).map_err(backend_error)?;
            ok(&SegmentResponse {
                mask: encode_mask_b64(&mask),
            })
        }
        ("POST", PATH_FEATURES) => {
            let req: FeaturesRequest = parse(body)?;
            let image = decode_image_b64(&req.image).map_err(bad)?;
            let fm = backends.features.features(&image).map_err(backend_error)?;
            ok(&FeaturesResponse {
                h: fm.height_cells(),
                w: fm.width_cells(),
                d: fm.dim(),
                data: encode_f32_b64(fm.data()),
            })
        }
        ("POST", PATH_CLASSIFY) => {
            let req: ClassifyRequest = parse(body)?;
            let image = decode_image_b64(&req.image).map_err(bad)?;
            let probs = backends.scoring.classify(&image, &req.labels).map_err(backend_error)?;
            ok(&ClassifyResponse { probs })
        }
        ("POST", PATH_MATCH) => {
            let req: MatchRequest = parse(body)?;
            let image = decode_image_b64(&req.image).map_err(bad)?;
            let scores = backends.scoring.match_texts(&image, &req.texts).map_err(backend_error)?;
            ok(&MatchResponse { scores })
        }
        _ => Err(error(404, codes::NOT_FOUND, format!("no route for {method} {path}"))),
    })();
    result.unwrap_or_else(|e| e)
}
