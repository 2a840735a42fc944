//! Interactive sessions behind the wire protocol: human or agent play on generated scenes,
//! mid-episode perturbations, and episode logs in the trainer's schema.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::env::{make_scenario, Action, EnvError, GeometryConfig, Point, Status, WorldState};
use crate::neural::{load_checkpoint, CheckpointError};
use crate::observe::{
    render, ObserveError, DISTRACTOR_COLOR, OBJECT_COLOR, OBSTACLE_COLOR, TARGET_COLOR, TOOL_COLOR,
};
use crate::reward::{reward_total, RewardWeights};
use crate::trainer::{ActingNetwork, EpisodeMode, EpisodeRecord, Policy};
use crate::Network;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session {0} belongs to another connection")]
    NotOwner(String),
    #[error("episode already ended with {0}")]
    Finished(Status),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("sequence number {got} does not follow {last}")]
    Sequence { got: u64, last: u64 },
    #[error("agent mode requires a checkpoint")]
    MissingCheckpoint,
    #[error("cannot load checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Observe(#[from] ObserveError),
    #[error("log write failed: {0}")]
    Log(#[from] std::io::Error),
}

impl SessionError {
    /// Stable machine-readable code for error envelopes.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::UnknownSession(_) => "unknown_session",
            SessionError::NotOwner(_) => "not_owner",
            SessionError::Finished(_) => "episode_finished",
            SessionError::BadRequest(_) => "bad_request",
            SessionError::Sequence { .. } => "bad_sequence",
            SessionError::MissingCheckpoint => "missing_checkpoint",
            SessionError::Checkpoint(_) => "bad_checkpoint",
            SessionError::Env(_) => "env",
            SessionError::Observe(_) => "observe",
            SessionError::Log(_) => "log",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    Human,
    Agent,
}

/// Axis-aligned body on the surface; lengths in cm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyView {
    pub center: Point,
    pub half_extents: Point,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceView {
    pub width: f64,
    pub height: f64,
}

/// Vector description of a scene, as sent to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub surface: SurfaceView,
    pub tool: BodyView,
    pub object: BodyView,
    pub target: BodyView,
    pub obstacles: Vec<BodyView>,
    pub obstacle_initial: Vec<Point>,
    pub distractors: Vec<BodyView>,
    pub step_count: u32,
    pub n_steps: u32,
    pub status: Status,
}

impl SceneDescription {
    pub fn of(world: &WorldState, cfg: &GeometryConfig) -> Self {
        let body = |center, half_extents, color| BodyView { center, half_extents, color };
        Self {
            surface: SurfaceView { width: cfg.surface_width, height: cfg.surface_height },
            tool: body(world.tool_pose, cfg.tool_half_extents, TOOL_COLOR),
            object: body(world.object_pose, cfg.object_half(), OBJECT_COLOR),
            target: body(world.target_pose, cfg.target_half(), TARGET_COLOR),
            obstacles: world.obstacles.iter().map(|&p| body(p, cfg.obstacle_half(), OBSTACLE_COLOR)).collect(),
            obstacle_initial: world.obstacle_initial.clone(),
            distractors: world.distractors.iter().map(|&p| body(p, cfg.distractor_half(), DISTRACTOR_COLOR)).collect(),
            step_count: world.step_count,
            n_steps: cfg.n_steps,
            status: world.status(cfg),
        }
    }

    /// Rebuild the geometric state. The slip generator is seeded from `seed`.
    pub fn to_world(&self, seed: u64) -> WorldState {
        let mut w = WorldState::new(
            self.tool.center,
            self.object.center,
            self.target.center,
            self.obstacles.iter().map(|b| b.center).collect(),
            seed,
        );
        w.obstacle_initial = self.obstacle_initial.clone();
        w.distractors = self.distractors.iter().map(|b| b.center).collect();
        w.step_count = self.step_count;
        w.refresh_displacements();
        w
    }
}

/// Mid-episode scene edits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    MoveObject { position: Point },
    /// The obstacle's reference position moves with it, so the edit itself is not a collision.
    MoveObstacle { index: usize, position: Point },
    MoveTarget { position: Point },
    SetSlipSigma { sigma: f64 },
    AddDistractor { position: Point },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateRequest {
    pub mode: SessionMode,
    pub seed: u64,
    #[serde(default)]
    pub n_obstacles: usize,
    /// Checkpoint file path, required in agent mode.
    #[serde(default)]
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRequest {
    #[serde(default)]
    pub action: Option<i64>,
    #[serde(default)]
    pub auto: bool,
    /// Client-measured time for this step; the server's own clock is used when absent.
    #[serde(default)]
    pub latency_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReply {
    pub action: Action,
    pub reward: f64,
    pub status: Status,
    pub scene: SceneDescription,
    /// The flushed episode once the status is terminal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode: Option<EpisodeRecord>,
}

/// One interactive episode.
pub struct Session {
    pub id: String,
    pub mode: SessionMode,
    seed: u64,
    n_obstacles: usize,
    geometry: GeometryConfig,
    weights: RewardWeights,
    world: WorldState,
    agent: Option<Arc<Network>>,
    actions: Vec<Action>,
    rewards: Vec<f64>,
    latencies: Vec<f64>,
    perturbations: u32,
    last_event: Instant,
}

impl Session {
    pub fn new(
        id: String,
        req: &CreateRequest,
        geometry: GeometryConfig,
        agent: Option<Arc<Network>>,
    ) -> Result<Self, SessionError> {
        if req.mode == SessionMode::Agent && agent.is_none() {
            return Err(SessionError::MissingCheckpoint);
        }
        let world = make_scenario(req.seed, req.n_obstacles, &geometry)?;
        Ok(Self {
            id,
            mode: req.mode,
            seed: req.seed,
            n_obstacles: req.n_obstacles,
            geometry,
            weights: RewardWeights::default(),
            world,
            agent,
            actions: Vec::new(),
            rewards: Vec::new(),
            latencies: Vec::new(),
            perturbations: 0,
            last_event: Instant::now(),
        })
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn geometry(&self) -> &GeometryConfig {
        &self.geometry
    }

    pub fn status(&self) -> Status {
        self.world.status(&self.geometry)
    }

    pub fn scene(&self) -> SceneDescription {
        SceneDescription::of(&self.world, &self.geometry)
    }

    fn ensure_running(&self) -> Result<(), SessionError> {
        match self.status() {
            Status::Running => Ok(()),
            s => Err(SessionError::Finished(s)),
        }
    }

    fn choose(&self, req: &StepRequest) -> Result<Action, SessionError> {
        match (req.action, req.auto) {
            (Some(_), true) => Err(SessionError::BadRequest("give either action or auto, not both".into())),
            (Some(i), false) => Action::new(i).map_err(|e| SessionError::BadRequest(e.to_string())),
            (None, true) => {
                let net = self
                    .agent
                    .as_ref()
                    .ok_or_else(|| SessionError::BadRequest("auto steps need an agent session".into()))?;
                let res = net.arch.input[1];
                let obs = render(&self.world, &self.geometry, res)?;
                net.greedy(&obs).map_err(|e| SessionError::BadRequest(e.to_string()))
            }
            (None, false) => Err(SessionError::BadRequest("missing action".into())),
        }
    }

    pub fn step(&mut self, req: &StepRequest) -> Result<StepReply, SessionError> {
        self.ensure_running()?;
        let action = self.choose(req)?;
        let prev = self.world.clone();
        let status = self.world.step_mut(action, &self.geometry)?;
        let reward = reward_total(&prev, &self.world, status, &self.weights, self.geometry.d_a);
        let now = Instant::now();
        let latency = req.latency_ms.unwrap_or_else(|| (now - self.last_event).as_secs_f64() * 1e3);
        if !(latency.is_finite() && latency >= 0.0) {
            return Err(SessionError::BadRequest(format!("invalid latency {latency}")));
        }
        self.last_event = now;
        self.actions.push(action);
        self.rewards.push(reward);
        self.latencies.push(latency);
        Ok(StepReply { action, reward, status, scene: self.scene(), episode: self.finished_record() })
    }

    pub fn perturb(&mut self, change: &Perturbation) -> Result<SceneDescription, SessionError> {
        self.ensure_running()?;
        let g = &self.geometry;
        let on_surface = |p: Point, half: Point| {
            if p.is_finite() && g.contains_box(p, half) {
                Ok(p)
            } else {
                Err(SessionError::BadRequest(format!("position ({}, {}) is off the surface", p.x, p.y)))
            }
        };
        match *change {
            Perturbation::MoveObject { position } => {
                self.world.object_pose = on_surface(position, g.object_half())?;
            }
            Perturbation::MoveObstacle { index, position } => {
                let p = on_surface(position, g.obstacle_half())?;
                if index >= self.world.obstacles.len() {
                    return Err(SessionError::BadRequest(format!("no obstacle {index}")));
                }
                self.world.obstacles[index] = p;
                self.world.obstacle_initial[index] = p;
            }
            Perturbation::MoveTarget { position } => {
                self.world.target_pose = on_surface(position, g.target_half())?;
            }
            Perturbation::SetSlipSigma { sigma } => {
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(SessionError::BadRequest(format!("slip sigma must be non-negative, got {sigma}")));
                }
                self.geometry.slip_sigma = sigma;
            }
            Perturbation::AddDistractor { position } => {
                let p = on_surface(position, g.distractor_half())?;
                self.world.distractors.push(p);
            }
        }
        self.world.refresh_displacements();
        self.perturbations += 1;
        Ok(self.scene())
    }

    /// The episode record if the episode has ended.
    pub fn finished_record(&self) -> Option<EpisodeRecord> {
        let outcome = self.status();
        outcome.is_terminal().then(|| EpisodeRecord {
            mode: match self.mode {
                SessionMode::Human => EpisodeMode::Human,
                SessionMode::Agent => EpisodeMode::Agent,
            },
            episode: None,
            seed: self.seed,
            n_obstacles: self.n_obstacles,
            actions: self.actions.clone(),
            rewards: self.rewards.clone(),
            outcome,
            length: self.actions.len() as u32,
            step_latency_ms: Some(self.latencies.clone()),
            perturbations: self.perturbations,
        })
    }
}

/// Message kinds of the wire protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    Create,
    Created,
    Step,
    Stepped,
    Perturb,
    Perturbed,
    Error,
}

/// `{type, session, payload, seq}`. Replies echo the request's `seq`; within a session, request
/// sequence numbers must strictly increase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "type")]
    pub kind: MessageType,
    #[serde(default)]
    pub session: Option<String>,
    #[serde(default)]
    pub payload: Value,
    pub seq: u64,
}

impl Envelope {
    pub fn error(session: Option<String>, seq: u64, err: &SessionError) -> Self {
        Self {
            kind: MessageType::Error,
            session,
            payload: json!({ "code": err.code(), "message": err.to_string() }),
            seq,
        }
    }
}

struct Slot {
    owner: u64,
    last_seq: u64,
    session: Session,
}

type LogSink = Box<dyn Write + Send>;

/// Owns every live session; operations on one session are serialized by its lock.
pub struct SessionManager {
    geometry: GeometryConfig,
    acting: ActingNetwork,
    sessions: Mutex<HashMap<String, Arc<Mutex<Slot>>>>,
    log: Option<Mutex<LogSink>>,
    counter: std::sync::atomic::AtomicU64,
    checkpoints: Mutex<HashMap<String, Arc<Network>>>,
}

impl SessionManager {
    pub fn new(geometry: GeometryConfig) -> Self {
        Self {
            geometry,
            acting: ActingNetwork::Target,
            sessions: Mutex::new(HashMap::new()),
            log: None,
            counter: std::sync::atomic::AtomicU64::new(0),
            checkpoints: Mutex::new(HashMap::new()),
        }
    }

    /// Completed episodes are appended to `sink` as JSONL.
    pub fn with_log(mut self, sink: impl Write + Send + 'static) -> Self {
        self.log = Some(Mutex::new(Box::new(sink)));
        self
    }

    pub fn with_acting_network(mut self, acting: ActingNetwork) -> Self {
        self.acting = acting;
        self
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session table lock").len()
    }

    fn load_agent(&self, path: &str) -> Result<Arc<Network>, SessionError> {
        if let Some(net) = self.checkpoints.lock().expect("checkpoint cache lock").get(path) {
            return Ok(net.clone());
        }
        let bytes = std::fs::read(path).map_err(|e| SessionError::Checkpoint(format!("{path}: {e}")))?;
        let loaded = load_checkpoint(&bytes, Some(&self.geometry.config_hash()))
            .map_err(|e: CheckpointError| SessionError::Checkpoint(e.to_string()))?;
        let net = Arc::new(match self.acting {
            ActingNetwork::Target => loaded.pair.target,
            ActingNetwork::Primary => loaded.pair.primary,
        });
        self.checkpoints.lock().expect("checkpoint cache lock").insert(path.to_string(), net.clone());
        Ok(net)
    }

    pub fn create(&self, owner: u64, req: &CreateRequest) -> Result<(String, SceneDescription), SessionError> {
        let agent = match (&req.mode, &req.checkpoint) {
            (SessionMode::Agent, None) => return Err(SessionError::MissingCheckpoint),
            (SessionMode::Agent, Some(path)) => Some(self.load_agent(path)?),
            (SessionMode::Human, _) => None,
        };
        let n = self.counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let id = format!("s{n:x}-{:08x}", rand::random::<u32>());
        let session = Session::new(id.clone(), req, self.geometry.clone(), agent)?;
        let scene = session.scene();
        let slot = Slot { owner, last_seq: 0, session };
        self.sessions.lock().expect("session table lock").insert(id.clone(), Arc::new(Mutex::new(slot)));
        Ok((id, scene))
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<Slot>>, SessionError> {
        self.sessions
            .lock()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    fn with_session<R>(
        &self,
        owner: u64,
        id: &str,
        seq: u64,
        f: impl FnOnce(&mut Session) -> Result<R, SessionError>,
    ) -> Result<R, SessionError> {
        let slot = self.slot(id)?;
        let mut slot = slot.lock().expect("session lock");
        if slot.owner != owner {
            return Err(SessionError::NotOwner(id.to_string()));
        }
        if seq <= slot.last_seq {
            return Err(SessionError::Sequence { got: seq, last: slot.last_seq });
        }
        slot.last_seq = seq;
        f(&mut slot.session)
    }

    pub fn step(&self, owner: u64, id: &str, seq: u64, req: &StepRequest) -> Result<StepReply, SessionError> {
        let reply = self.with_session(owner, id, seq, |s| s.step(req))?;
        if let Some(rec) = &reply.episode {
            self.write_log(rec)?;
        }
        Ok(reply)
    }

    pub fn perturb(&self, owner: u64, id: &str, seq: u64, change: &Perturbation) -> Result<SceneDescription, SessionError> {
        let (scene, finished) = self.with_session(owner, id, seq, |s| Ok((s.perturb(change)?, s.finished_record())))?;
        if let Some(rec) = &finished {
            self.write_log(rec)?;
        }
        Ok(scene)
    }

    fn write_log(&self, rec: &EpisodeRecord) -> Result<(), SessionError> {
        if let Some(log) = &self.log {
            let mut out = log.lock().expect("log lock");
            let line = serde_json::to_string(rec).expect("episode record serializes");
            writeln!(out, "{line}")?;
            out.flush()?;
        }
        Ok(())
    }

    /// Drop every session owned by a closed connection.
    pub fn release(&self, owner: u64) {
        self.sessions
            .lock()
            .expect("session table lock")
            .retain(|_, slot| slot.lock().map(|s| s.owner != owner).unwrap_or(false));
    }

    /// Dispatch one request envelope and build the reply.
    pub fn handle(&self, owner: u64, msg: Envelope) -> Envelope {
        let seq = msg.seq;
        let session = msg.session.clone();
        let result = (|| -> Result<Envelope, SessionError> {
            let need_id = || session.clone().ok_or_else(|| SessionError::BadRequest("missing session id".into()));
            match msg.kind {
                MessageType::Create => {
                    let req: CreateRequest = parse(msg.payload)?;
                    let (id, scene) = self.create(owner, &req)?;
                    if let Ok(slot) = self.slot(&id) {
                        slot.lock().expect("session lock").last_seq = seq;
                    }
                    Ok(Envelope { kind: MessageType::Created, session: Some(id), payload: json!({ "scene": scene }), seq })
                }
                MessageType::Step => {
                    let id = need_id()?;
                    let req: StepRequest = parse(msg.payload)?;
                    let reply = self.step(owner, &id, seq, &req)?;
                    Ok(Envelope {
                        kind: MessageType::Stepped,
                        session: Some(id),
                        payload: serde_json::to_value(reply).expect("step reply serializes"),
                        seq,
                    })
                }
                MessageType::Perturb => {
                    let id = need_id()?;
                    let change: Perturbation = parse(msg.payload)?;
                    let scene = self.perturb(owner, &id, seq, &change)?;
                    Ok(Envelope { kind: MessageType::Perturbed, session: Some(id), payload: json!({ "scene": scene }), seq })
                }
                other => Err(SessionError::BadRequest(format!("{other:?} is a reply type"))),
            }
        })();
        result.unwrap_or_else(|e| Envelope::error(session, seq, &e))
    }
}

fn parse<T: serde::de::DeserializeOwned>(v: Value) -> Result<T, SessionError> {
    serde_json::from_value(v).map_err(|e| SessionError::BadRequest(e.to_string()))
}
