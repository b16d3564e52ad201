//! Live deployment sessions.
//!
//! A client reports path steps as the walk happens; each session tracks the
//! offset from the last relay and answers with place/continue advice for
//! its placement set. The tracker follows the actions actually taken, so a
//! human may override any advice.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::constrained::{solve_constrained, SolutionKind};
use crate::error::{Error, Result};
use crate::heuristic::distance_set;
use crate::model::{CostParams, Instance, LatticePoint};
use crate::osla::solve_unconstrained;
use crate::placement::PlacementSet;
use crate::renewal::eval_cost;
use crate::sim::{episode_rng, Direction, Policy, Walk};

fn default_eta() -> f64 {
    CostParams::DEFAULT_ETA
}

fn default_p_m() -> f64 {
    CostParams::DEFAULT_P_M
}

fn default_gamma() -> f64 {
    CostParams::DEFAULT_GAMMA
}

/// Corridor, cost and relay price of a session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionParams {
    pub p: f64,
    pub q: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_p_m", alias = "pm")]
    pub p_m: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

impl SessionParams {
    pub fn instance(&self) -> Result<Instance> {
        Instance::power(self.p, self.q, self.lambda, self.p_m, self.gamma, self.eta)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicyChoice {
    #[default]
    Optimal,
    Heuristic {
        r_th: f64,
    },
    /// Relay budget; a mixed solution is drawn once, from `seed`.
    Constrained {
        rho: f64,
        #[serde(default)]
        seed: u64,
    },
    /// A placement set supplied by the client.
    Explicit {
        set: PlacementSet,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixDraw {
    pub kind: SolutionKind,
    pub lambda: f64,
    pub alpha: f64,
    /// `true` when the budget-exceeding component was drawn.
    pub drew_over: bool,
}

/// A policy choice resolved to the set used for the whole deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedPolicy {
    pub choice: PolicyChoice,
    pub set: PlacementSet,
    /// Renewal objective of `set` at the session's price.
    pub g: f64,
    pub expected_relays: f64,
    pub expected_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mix: Option<MixDraw>,
}

pub fn resolve_policy(params: &SessionParams, choice: &PolicyChoice) -> Result<ResolvedPolicy> {
    let inst = params.instance()?;
    let mut mix = None;
    let set = match choice {
        PolicyChoice::Optimal => solve_unconstrained(&inst)?.optimal_set,
        PolicyChoice::Heuristic { r_th } => distance_set(*r_th)?,
        PolicyChoice::Constrained { rho, seed } => {
            let sol = solve_constrained(&inst, *rho)?;
            let policy = Policy::from(&sol);
            let drawn = policy.draw(&mut episode_rng(*seed, 0)).clone();
            mix = Some(MixDraw {
                kind: sol.kind,
                lambda: sol.lambda,
                alpha: sol.alpha,
                drew_over: sol.set_over.as_ref() == Some(&drawn),
            });
            drawn
        }
        PolicyChoice::Explicit { set } => set.clone(),
    };
    let ev = eval_cost(&set, &inst)?;
    Ok(ResolvedPolicy {
        choice: choice.clone(),
        set,
        g: ev.g,
        expected_relays: ev.expected_relays,
        expected_cost: ev.expected_cost,
        mix,
    })
}

/// Boundary rows `[n, m*(n)]` of a set.
pub fn boundary_rows(set: &PlacementSet) -> Vec<(u64, u64)> {
    set.rows().iter().enumerate().map(|(n, &m)| (n as u64, m)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Override {
    Place,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Advice {
    Place,
    Continue,
    SourcePlaced,
}

/// What was actually done at a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Place,
    Continue,
    Source,
}

/// A reported step. `direction` may be omitted only when the path ends at
/// the current point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRequest {
    #[serde(default)]
    pub direction: Option<Direction>,
    #[serde(default)]
    pub ended: bool,
    #[serde(default, rename = "override", skip_serializing_if = "Option::is_none")]
    pub override_action: Option<Override>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub event: StepRequest,
    /// Offset from the last relay after moving.
    pub rel_state: LatticePoint,
    pub advice: Advice,
    pub action: Action,
    pub step_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRequest {
    #[serde(flatten)]
    pub params: SessionParams,
    #[serde(default)]
    pub policy: PolicyChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub params: SessionParams,
    pub policy: ResolvedPolicy,
    pub boundary: Vec<(u64, u64)>,
    pub rel_state: LatticePoint,
    pub abs_position: LatticePoint,
    pub steps: u64,
    pub relays: u64,
    pub relay_positions: Vec<LatticePoint>,
    pub accumulated_cost: f64,
    /// `accumulated_cost + λ relays`.
    pub objective: f64,
    pub ended: bool,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub advice: Advice,
    pub action: Action,
    pub step_cost: f64,
    pub session: SessionView,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    id: String,
    params: SessionParams,
    policy: Arc<ResolvedPolicy>,
    cost: CostParams,
    walk: Walk,
    history: Vec<HistoryEntry>,
}

impl Session {
    pub fn new(id: impl Into<String>, params: SessionParams, policy: Arc<ResolvedPolicy>) -> Result<Self> {
        let cost = params.instance()?.cost;
        Ok(Self {
            id: id.into(),
            params,
            policy,
            cost,
            walk: Walk::new(),
            history: Vec::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn ended(&self) -> bool {
        self.walk.ended
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn apply_step(&mut self, req: StepRequest) -> Result<(Advice, Action, f64)> {
        if self.walk.ended {
            return Err(Error::SessionEnded(self.id.clone()));
        }
        match (req.direction, req.ended) {
            (None, false) => return Err(Error::InvalidStep("a direction is required unless the path ends".into())),
            (None, true) if self.walk.rel.is_origin() => {
                return Err(Error::InvalidStep("the path cannot end at the last relay".into()))
            }
            (Some(_), true) | (None, true) if req.override_action.is_some() => {
                return Err(Error::InvalidStep("the final step cannot be overridden".into()))
            }
            _ => {}
        }
        if let Some(d) = req.direction {
            self.walk.step(d);
        }
        let rel_state = self.walk.rel;
        let (advice, action, step_cost) = if req.ended {
            (Advice::SourcePlaced, Action::Source, self.walk.finish(&self.cost))
        } else {
            let advice = if self.policy.set.contains(rel_state) {
                Advice::Place
            } else {
                Advice::Continue
            };
            let place = match req.override_action {
                Some(o) => o == Override::Place,
                None => advice == Advice::Place,
            };
            if place {
                (advice, Action::Place, self.walk.place(&self.cost))
            } else {
                (advice, Action::Continue, 0.0)
            }
        };
        self.history.push(HistoryEntry {
            event: req,
            rel_state,
            advice,
            action,
            step_cost,
        });
        Ok((advice, action, step_cost))
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            id: self.id.clone(),
            params: self.params,
            policy: (*self.policy).clone(),
            boundary: boundary_rows(&self.policy.set),
            rel_state: self.walk.rel,
            abs_position: self.walk.abs,
            steps: self.walk.steps,
            relays: self.walk.relays(),
            relay_positions: self.walk.relay_positions.clone(),
            accumulated_cost: self.walk.total_cost,
            objective: self.walk.total_cost + self.params.lambda * self.walk.relays() as f64,
            ended: self.walk.ended,
            history: self.history.clone(),
        }
    }
}

/// One line of the append-only session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LogRecord {
    Create { id: String, request: SessionRequest },
    Step { id: String, step: StepRequest },
}

/// Thread-safe session registry with a shared policy cache.
#[derive(Default)]
pub struct Advisor {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    policies: Mutex<HashMap<String, Arc<ResolvedPolicy>>>,
    next_id: Mutex<u64>,
    log: Option<Mutex<File>>,
}

fn lock_err<T>(_: T) -> Error {
    Error::Inconsistent("advisor lock poisoned".into())
}

impl Advisor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replays `path` if it exists, then appends every change to it.
    pub fn with_log(path: impl AsRef<Path>) -> Result<Self> {
        let path: PathBuf = path.as_ref().into();
        let mut advisor = Self::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: LogRecord = serde_json::from_str(&line)
                    .map_err(|e| Error::Inconsistent(format!("log line {}: {e}", i + 1)))?;
                advisor.apply_record(rec)?;
            }
        }
        advisor.log = Some(Mutex::new(OpenOptions::new().create(true).append(true).open(&path)?));
        Ok(advisor)
    }

    fn apply_record(&self, rec: LogRecord) -> Result<()> {
        match rec {
            LogRecord::Create { id, request } => {
                if let Some(n) = id.strip_prefix('s').and_then(|s| s.parse::<u64>().ok()) {
                    let mut next = self.next_id.lock().map_err(lock_err)?;
                    *next = (*next).max(n);
                }
                self.insert(id, &request).map(drop)
            }
            LogRecord::Step { id, step } => self.session(&id)?.lock().map_err(lock_err)?.apply_step(step).map(drop),
        }
    }

    fn append(&self, rec: &LogRecord) -> Result<()> {
        if let Some(log) = &self.log {
            let mut f = log.lock().map_err(lock_err)?;
            serde_json::to_writer(&mut *f, rec)?;
            f.write_all(b"\n")?;
            f.flush()?;
        }
        Ok(())
    }

    /// Resolves a policy, reusing earlier resolutions of the same request.
    pub fn policy(&self, params: &SessionParams, choice: &PolicyChoice) -> Result<Arc<ResolvedPolicy>> {
        params.instance()?;
        let key = serde_json::to_string(&(params, choice))?;
        if let Some(p) = self.policies.lock().map_err(lock_err)?.get(&key) {
            return Ok(p.clone());
        }
        let resolved = Arc::new(resolve_policy(params, choice)?);
        self.policies.lock().map_err(lock_err)?.insert(key, resolved.clone());
        Ok(resolved)
    }

    fn insert(&self, id: String, req: &SessionRequest) -> Result<SessionView> {
        let policy = self.policy(&req.params, &req.policy)?;
        let session = Session::new(id.clone(), req.params, policy)?;
        let view = session.view();
        self.sessions
            .write()
            .map_err(lock_err)?
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    pub fn create(&self, req: &SessionRequest) -> Result<SessionView> {
        // resolve before taking an id so failed requests leave no trace
        self.policy(&req.params, &req.policy)?;
        let id = {
            let mut next = self.next_id.lock().map_err(lock_err)?;
            *next += 1;
            format!("s{}", *next)
        };
        let view = self.insert(id.clone(), req)?;
        self.append(&LogRecord::Create {
            id,
            request: req.clone(),
        })?;
        Ok(view)
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .map_err(lock_err)?
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownSession(id.to_string()))
    }

    pub fn step(&self, id: &str, req: StepRequest) -> Result<StepResponse> {
        let session = self.session(id)?;
        let mut s = session.lock().map_err(lock_err)?;
        let (advice, action, step_cost) = s.apply_step(req)?;
        self.append(&LogRecord::Step {
            id: id.to_string(),
            step: req,
        })?;
        Ok(StepResponse {
            advice,
            action,
            step_cost,
            session: s.view(),
        })
    }

    pub fn get(&self, id: &str) -> Result<SessionView> {
        Ok(self.session(id)?.lock().map_err(lock_err)?.view())
    }
}

/// Rebuilds a session from its creation request and step log.
pub fn replay(id: &str, req: &SessionRequest, steps: &[StepRequest]) -> Result<SessionView> {
    let policy = Arc::new(resolve_policy(&req.params, &req.policy)?);
    let mut s = Session::new(id, req.params, policy)?;
    for &step in steps {
        s.apply_step(step)?;
    }
    Ok(s.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::hop_cost;
    use approx::assert_relative_eq;

    fn params() -> SessionParams {
        SessionParams {
            p: 0.02,
            q: 0.5,
            lambda: 41.0,
            eta: 2.0,
            p_m: 0.1,
            gamma: 0.01,
        }
    }

    /// The set `m + n >= 8`.
    fn line_set() -> PlacementSet {
        PlacementSet::from_rows((0..8).map(|n| 8 - n).collect::<Vec<u64>>()).unwrap()
    }

    fn explicit(set: PlacementSet) -> SessionRequest {
        SessionRequest {
            params: params(),
            policy: PolicyChoice::Explicit { set },
        }
    }

    fn east() -> StepRequest {
        StepRequest {
            direction: Some(Direction::East),
            ended: false,
            override_action: None,
        }
    }

    fn north() -> StepRequest {
        StepRequest {
            direction: Some(Direction::North),
            ..east()
        }
    }

    fn end_here() -> StepRequest {
        StepRequest {
            direction: None,
            ended: true,
            override_action: None,
        }
    }

    #[test]
    fn line_set_advises_place_on_eighth_east_step() {
        let adv = Advisor::new();
        let id = adv.create(&explicit(line_set())).unwrap().id;
        for _ in 0..7 {
            assert_eq!(adv.step(&id, east()).unwrap().advice, Advice::Continue);
        }
        let r = adv.step(&id, east()).unwrap();
        assert_eq!((r.advice, r.action), (Advice::Place, Action::Place));
        assert_eq!(r.session.rel_state, LatticePoint::ORIGIN);
        assert_eq!(r.session.relay_positions, vec![LatticePoint::new(8, 0)]);
        assert_relative_eq!(r.step_cost, 0.74, epsilon = 1e-14);
    }

    #[test]
    fn ending_charges_the_final_hop() {
        let adv = Advisor::new();
        let id = adv.create(&explicit(line_set())).unwrap().id;
        adv.step(&id, east()).unwrap();
        adv.step(&id, east()).unwrap();
        adv.step(&id, north()).unwrap();
        let r = adv.step(&id, end_here()).unwrap();
        assert_eq!(r.advice, Advice::SourcePlaced);
        assert_relative_eq!(r.step_cost, 0.15, epsilon = 1e-14);
        assert_relative_eq!(r.session.accumulated_cost, hop_cost(5f64.sqrt(), &CostParams::with_eta(2.0).unwrap()).unwrap());
        assert!(r.session.ended);
        assert!(matches!(adv.step(&id, east()), Err(Error::SessionEnded(_))));
    }

    #[test]
    fn skip_override_keeps_tracking() {
        let adv = Advisor::new();
        let id = adv.create(&explicit(line_set())).unwrap().id;
        for _ in 0..7 {
            adv.step(&id, east()).unwrap();
        }
        let skip = StepRequest {
            override_action: Some(Override::Skip),
            ..east()
        };
        let r = adv.step(&id, skip).unwrap();
        assert_eq!((r.advice, r.action), (Advice::Place, Action::Continue));
        let r = adv.step(&id, north()).unwrap();
        // advice is recomputed from the un-reset offset, then followed
        assert_eq!(r.session.history.last().unwrap().rel_state, LatticePoint::new(8, 1));
        assert_eq!(r.advice, Advice::Place);
        assert_eq!(r.session.relay_positions, vec![LatticePoint::new(8, 1)]);
        assert_eq!(r.session.relays, 1);
        assert_eq!(r.session.history.len(), 9);

        let place_early = StepRequest {
            override_action: Some(Override::Place),
            ..east()
        };
        let r = adv.step(&id, place_early).unwrap();
        assert_eq!((r.advice, r.action), (Advice::Continue, Action::Place));
        assert_eq!(r.session.relays, 2);
    }

    #[test]
    fn invalid_steps_are_rejected() {
        let adv = Advisor::new();
        let id = adv.create(&explicit(line_set())).unwrap().id;
        let bare = StepRequest {
            direction: None,
            ended: false,
            override_action: None,
        };
        assert!(matches!(adv.step(&id, bare), Err(Error::InvalidStep(_))));
        assert!(matches!(adv.step(&id, end_here()), Err(Error::InvalidStep(_))));
        assert!(matches!(adv.step("nope", east()), Err(Error::UnknownSession(_))));
        assert!(adv.get(&id).unwrap().history.is_empty());
    }

    #[test]
    fn optimal_session_boundary_matches_solver() {
        let adv = Advisor::new();
        let view = adv
            .create(&SessionRequest {
                params: params(),
                policy: PolicyChoice::Optimal,
            })
            .unwrap();
        let set = solve_unconstrained(&params().instance().unwrap()).unwrap().optimal_set;
        assert_eq!(view.boundary, boundary_rows(&set));
        assert_eq!(view.policy.set, set);
    }

    #[test]
    fn unit_heuristic_boundary() {
        let pol = resolve_policy(&params(), &PolicyChoice::Heuristic { r_th: 1.0 }).unwrap();
        assert_eq!(boundary_rows(&pol.set), vec![(0, 1)]);
        assert!(pol.set.contains(LatticePoint::new(0, 1)));
    }

    #[test]
    fn invalid_parameters_name_the_field() {
        let bad = SessionParams { p: 1.5, ..params() };
        match Advisor::new().create(&SessionRequest {
            params: bad,
            policy: PolicyChoice::Optimal,
        }) {
            Err(Error::InvalidParameter { field, .. }) => assert_eq!(field, "p"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constrained_session_draws_a_component() {
        let p = SessionParams {
            p: 0.5,
            q: 1.0,
            lambda: 0.0,
            ..params()
        };
        let draws: Vec<bool> = (0..40)
            .map(|seed| {
                let pol = resolve_policy(&p, &PolicyChoice::Constrained { rho: 0.04, seed }).unwrap();
                let mix = pol.mix.unwrap();
                assert_eq!(mix.kind, SolutionKind::Mixed);
                assert_eq!(pol.set.rows(), if mix.drew_over { &[4] } else { &[5] });
                mix.drew_over
            })
            .collect();
        assert!(draws.iter().any(|&b| b) && draws.iter().any(|&b| !b));
    }

    #[test]
    fn log_replays_sessions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let before = {
            let adv = Advisor::with_log(&path).unwrap();
            let id = adv.create(&explicit(line_set())).unwrap().id;
            for _ in 0..9 {
                adv.step(&id, east()).unwrap();
            }
            adv.step(&id, north()).unwrap();
            adv.get(&id).unwrap()
        };
        let adv = Advisor::with_log(&path).unwrap();
        assert_eq!(adv.get(&before.id).unwrap(), before);
        let next = adv.create(&explicit(line_set())).unwrap();
        assert_ne!(next.id, before.id);

        let steps: Vec<StepRequest> = before.history.iter().map(|h| h.event).collect();
        let replayed = replay(&before.id, &explicit(line_set()), &steps).unwrap();
        assert_eq!(replayed, before);
    }

    #[test]
    fn request_wire_format() {
        let req: SessionRequest = serde_json::from_str(
            r#"{"p":0.02,"q":0.5,"lambda":41,"pm":0.1,"policy":{"kind":"heuristic","r_th":3.5}}"#,
        )
        .unwrap();
        assert_eq!(req.params.eta, 2.0);
        assert_eq!(req.policy, PolicyChoice::Heuristic { r_th: 3.5 });
        let step: StepRequest = serde_json::from_str(r#"{"direction":"east","override":"skip"}"#).unwrap();
        assert_eq!(step.override_action, Some(Override::Skip));
        assert!(!step.ended);
    }
}
