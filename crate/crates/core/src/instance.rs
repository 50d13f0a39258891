//! Problem instances: data model, random generators and the on-disk format.
//!
//! Node ids of an EVRP instance follow a fixed layout: the depot is node `0`,
//! recharge stations occupy `1..=s` and customers `s+1..=s+n`. Instance files
//! are pretty-printed JSON with a `problem` tag and struct-ordered keys, so the
//! same instance always serializes to the same bytes.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Customer demands are drawn uniformly from this set.
pub const DEMAND_LEVELS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Depot,
    Customer,
    Station,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    pub x: f64,
    pub y: f64,
    pub demand: f64,
}

/// Vehicle physics. Masses are in kg, battery in kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Cargo capacity `L`.
    pub capacity: f64,
    pub unladen_mass: f64,
    /// Battery capacity `Q`.
    pub battery_capacity: f64,
    pub frontal_area: f64,
    pub air_density: f64,
    pub gravity: f64,
    pub rolling_resistance: f64,
    pub drag_coefficient: f64,
    pub propulsion_efficiency: f64,
    pub regen_braking_efficiency: f64,
    pub charging_efficiency: f64,
    pub discharging_efficiency: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            capacity: 4000.0,
            unladen_mass: 4100.0,
            battery_capacity: 80.0,
            frontal_area: 3.912,
            air_density: 1.2,
            gravity: 9.81,
            rolling_resistance: 0.01,
            drag_coefficient: 0.7,
            propulsion_efficiency: 1.18,
            regen_braking_efficiency: 0.85,
            charging_efficiency: 1.11,
            discharging_efficiency: 0.93,
        }
    }
}

impl VehicleParams {
    fn check(&self) -> Result<()> {
        let fields = [
            ("capacity", self.capacity),
            ("unladen_mass", self.unladen_mass),
            ("battery_capacity", self.battery_capacity),
            ("frontal_area", self.frontal_area),
            ("air_density", self.air_density),
            ("gravity", self.gravity),
            ("rolling_resistance", self.rolling_resistance),
            ("drag_coefficient", self.drag_coefficient),
            ("propulsion_efficiency", self.propulsion_efficiency),
            ("regen_braking_efficiency", self.regen_braking_efficiency),
            ("charging_efficiency", self.charging_efficiency),
            ("discharging_efficiency", self.discharging_efficiency),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "vehicle.{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// What the EVRP objective sums over traversed edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectiveMode {
    /// Total distance (km).
    #[serde(rename = "DM")]
    Distance,
    /// Total energy (kWh).
    #[serde(rename = "EM")]
    Energy,
}

impl fmt::Display for ObjectiveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveMode::Distance => "DM",
            ObjectiveMode::Energy => "EM",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvrpInstance {
    pub nodes: Vec<Node>,
    pub vehicle: VehicleParams,
    /// Average speed in km/h, shared by every edge.
    pub speed: f64,
    /// Maximum driver time per depot-to-depot trip, hours.
    pub t_max: f64,
    /// Serving time spent at each customer, hours.
    pub service_time: f64,
    /// Time spent at a recharge station, hours.
    pub recharge_dwell: f64,
    /// Optional edge slopes in radians, antisymmetric.
    pub slope: Option<Vec<Vec<f64>>>,
    /// Scale rolling resistance by gravity (`c_r * g * cos a`) instead of the
    /// bare `c_r * cos a` term.
    pub physical_rolling_resistance: bool,
    pub objective_mode: ObjectiveMode,
    pub seed: Option<u64>,
}

pub const DEFAULT_SPEED_KMH: f64 = 60.0;
pub const DEFAULT_T_MAX_H: f64 = 8.0;
pub const DEFAULT_SERVICE_TIME_H: f64 = 0.1;

impl EvrpInstance {
    /// Builds an instance with default vehicle and timing parameters from
    /// explicit depot, station and customer data; `customers` holds `(x, y, demand)`.
    pub fn from_parts(
        depot: (f64, f64),
        stations: &[(f64, f64)],
        customers: &[(f64, f64, f64)],
        objective_mode: ObjectiveMode,
    ) -> Self {
        let mut nodes = Vec::with_capacity(1 + stations.len() + customers.len());
        nodes.push(Node {
            id: 0,
            kind: NodeKind::Depot,
            x: depot.0,
            y: depot.1,
            demand: 0.0,
        });
        for &(x, y) in stations {
            nodes.push(Node {
                id: nodes.len(),
                kind: NodeKind::Station,
                x,
                y,
                demand: 0.0,
            });
        }
        for &(x, y, demand) in customers {
            nodes.push(Node {
                id: nodes.len(),
                kind: NodeKind::Customer,
                x,
                y,
                demand,
            });
        }
        Self {
            nodes,
            vehicle: VehicleParams::default(),
            speed: DEFAULT_SPEED_KMH,
            t_max: DEFAULT_T_MAX_H,
            service_time: DEFAULT_SERVICE_TIME_H,
            recharge_dwell: 0.0,
            slope: None,
            physical_rolling_resistance: false,
            objective_mode,
            seed: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depot(&self) -> usize {
        0
    }

    pub fn n_stations(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Station)
            .count()
    }

    pub fn n_customers(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Customer)
            .count()
    }

    pub fn customers(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Customer)
            .map(|n| n.id)
    }

    pub fn kind(&self, id: usize) -> NodeKind {
        self.nodes[id].kind
    }

    /// Euclidean distance in km.
    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        self.check_id(i)?;
        self.check_id(j)?;
        Ok(self.dist(i, j))
    }

    /// Unchecked distance; panics on out-of-range ids.
    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.nodes[i], &self.nodes[j]);
        (a.x - b.x).hypot(a.y - b.y)
    }

    /// Travel time in hours.
    pub fn travel_time(&self, i: usize, j: usize) -> Result<f64> {
        if !(self.speed > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "speed must be positive, got {}",
                self.speed
            )));
        }
        Ok(self.distance(i, j)? / self.speed)
    }

    #[inline]
    pub fn time(&self, i: usize, j: usize) -> f64 {
        self.dist(i, j) / self.speed
    }

    #[inline]
    pub fn slope_at(&self, i: usize, j: usize) -> f64 {
        self.slope.as_ref().map_or(0.0, |s| s[i][j])
    }

    fn check_id(&self, id: usize) -> Result<()> {
        if id < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                id,
                len: self.nodes.len(),
            })
        }
    }

    /// Structural invariants. Run on load and by the environment constructor.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInstance(m));
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return bad(format!("node at index {i} has id {}", n.id));
            }
            if !(n.x.is_finite() && n.y.is_finite()) {
                return bad(format!("node {i} has non-finite coordinates"));
            }
            match n.kind {
                NodeKind::Customer => {
                    if !(n.demand > 0.0 && n.demand <= self.vehicle.capacity) {
                        return bad(format!("customer {i} demand {} out of range", n.demand));
                    }
                }
                _ => {
                    if n.demand != 0.0 {
                        return bad(format!("non-customer node {i} has demand {}", n.demand));
                    }
                }
            }
        }
        let depots = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Depot)
            .count();
        if depots != 1 || self.nodes[0].kind != NodeKind::Depot {
            return bad(format!("expected exactly one depot at id 0, found {depots}"));
        }
        if self.n_customers() == 0 {
            return bad("no customers".into());
        }
        self.vehicle.check()?;
        for (name, v) in [("speed", self.speed), ("t_max", self.t_max)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("service_time", self.service_time),
            ("recharge_dwell", self.recharge_dwell),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if let Some(s) = &self.slope {
            let n = self.nodes.len();
            if s.len() != n || s.iter().any(|row| row.len() != n) {
                return bad(format!("slope matrix must be {n}x{n}"));
            }
            for i in 0..n {
                for j in 0..n {
                    if s[i][j] != -s[j][i] {
                        return bad(format!("slope matrix not antisymmetric at ({i},{j})"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TspInstance {
    pub coords: Vec<[f64; 2]>,
    pub seed: Option<u64>,
}

impl TspInstance {
    pub fn new(coords: Vec<[f64; 2]>) -> Result<Self> {
        let inst = Self { coords, seed: None };
        inst.validate()?;
        Ok(inst)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        for id in [i, j] {
            if id >= self.coords.len() {
                return Err(Error::NodeOutOfRange {
                    id,
                    len: self.coords.len(),
                });
            }
        }
        Ok(self.dist(i, j))
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.coords[i], self.coords[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    /// Length of the closed tour visiting `order` and returning to its start.
    pub fn tour_length(&self, order: &[usize]) -> f64 {
        if order.len() < 2 {
            return 0.0;
        }
        let open: f64 = order.windows(2).map(|w| self.dist(w[0], w[1])).sum();
        open + self.dist(order[order.len() - 1], order[0])
    }

    pub fn validate(&self) -> Result<()> {
        if self.coords.len() < 3 {
            return Err(Error::InvalidInstance(format!(
                "TSP needs at least 3 cities, got {}",
                self.coords.len()
            )));
        }
        for (i, c) in self.coords.iter().enumerate() {
            if !c.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
                return Err(Error::InvalidInstance(format!(
                    "city {i} at {c:?} outside the unit square"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "lowercase")]
pub enum Instance {
    Tsp(TspInstance),
    Evrp(EvrpInstance),
}

impl Instance {
    pub fn len(&self) -> usize {
        match self {
            Instance::Tsp(t) => t.len(),
            Instance::Evrp(e) => e.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        match self {
            Instance::Tsp(t) => t.distance(i, j),
            Instance::Evrp(e) => e.distance(i, j),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Instance::Tsp(t) => t.seed,
            Instance::Evrp(e) => e.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Instance::Tsp(t) => t.validate(),
            Instance::Evrp(e) => e.validate(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("instance serializes");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let inst: Instance = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        inst.validate()?;
        Ok(inst)
    }
}

impl From<TspInstance> for Instance {
    fn from(t: TspInstance) -> Self {
        Instance::Tsp(t)
    }
}

impl From<EvrpInstance> for Instance {
    fn from(e: EvrpInstance) -> Self {
        Instance::Evrp(e)
    }
}

/// Random EVRP instance: depot uniform in `[25,75]^2`, stations and customers
/// uniform in `[0,100]^2`, demands uniform over [`DEMAND_LEVELS`].
pub fn generate_evrp(n_customers: usize, n_stations: usize, seed: u64) -> Result<EvrpInstance> {
    if n_customers == 0 || n_stations == 0 {
        return Err(Error::InvalidArgument(format!(
            "need at least one customer and one station, got {n_customers} and {n_stations}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depot = (rng.random_range(25.0..=75.0), rng.random_range(25.0..=75.0));
    let stations: Vec<(f64, f64)> = (0..n_stations)
        .map(|_| (rng.random_range(0.0..=100.0), rng.random_range(0.0..=100.0)))
        .collect();
    let customers: Vec<(f64, f64, f64)> = (0..n_customers)
        .map(|_| {
            let x = rng.random_range(0.0..=100.0);
            let y = rng.random_range(0.0..=100.0);
            let d = DEMAND_LEVELS[rng.random_range(0..DEMAND_LEVELS.len())];
            (x, y, d)
        })
        .collect();
    let mut inst = EvrpInstance::from_parts(depot, &stations, &customers, ObjectiveMode::Energy);
    inst.seed = Some(seed);
    Ok(inst)
}

/// Random TSP instance with cities uniform in the unit square.
pub fn generate_tsp(n: usize, seed: u64) -> Result<TspInstance> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "TSP needs at least 3 cities, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n)
        .map(|_| [rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0)])
        .collect();
    Ok(TspInstance {
        coords,
        seed: Some(seed),
    })
}

pub fn save_instance(inst: &Instance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, inst.to_text()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Instance::from_text(&text, path)
}
