//! Fixed-width numeric views of a player state.

use serde::{Deserialize, Serialize};

use super::tape::Tensor;
use crate::env::{Env, PlayerState};
use crate::error::{Error, Result};
use crate::instance::{Instance, NodeKind, ObjectiveMode};

/// Per-node columns: x, y, demand, is_depot (TSP: first city), is_customer,
/// is_station, served, is_current.
pub const NODE_FEATURES: usize = 8;
/// Battery, clock, load, accumulated cost (squashed), fraction served.
pub const GLOBAL_FEATURES: usize = 5;

const STATIC_COLUMNS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFeatures {
    /// `n_nodes x NODE_FEATURES`.
    pub nodes: Tensor,
    pub global: Vec<f64>,
    pub current: usize,
    /// Legal next actions by node id; all false in a terminal state.
    pub legal: Vec<bool>,
}

impl StateFeatures {
    pub fn new(env: &Env, state: &PlayerState) -> Result<Self> {
        let n = env.n_nodes();
        let mut nodes = Tensor::zeros(n, NODE_FEATURES);
        let legal = if state.done {
            vec![false; n]
        } else {
            env.legal_actions(state)?
        };
        let global = match env.instance() {
            Instance::Tsp(t) => {
                for (i, c) in t.coords.iter().enumerate() {
                    let row = &mut nodes.data[i * NODE_FEATURES..(i + 1) * NODE_FEATURES];
                    row[0] = c[0];
                    row[1] = c[1];
                    row[3] = f64::from(u8::from(i == 0));
                    row[4] = f64::from(u8::from(i != 0));
                }
                let scale = n as f64;
                vec![
                    0.0,
                    0.0,
                    0.0,
                    squash(state.cost / scale),
                    state.n_served() as f64 / n as f64,
                ]
            }
            Instance::Evrp(e) => {
                let max_demand = e
                    .customers()
                    .map(|c| e.nodes[c].demand)
                    .fold(0.0, f64::max)
                    .max(f64::MIN_POSITIVE);
                for (i, node) in e.nodes.iter().enumerate() {
                    let row = &mut nodes.data[i * NODE_FEATURES..(i + 1) * NODE_FEATURES];
                    row[0] = (node.x / 100.0).clamp(0.0, 1.0);
                    row[1] = (node.y / 100.0).clamp(0.0, 1.0);
                    match node.kind {
                        NodeKind::Depot => row[3] = 1.0,
                        NodeKind::Customer => {
                            row[2] = (node.demand / max_demand).clamp(0.0, 1.0);
                            row[4] = 1.0;
                        }
                        NodeKind::Station => row[5] = 1.0,
                    }
                }
                let veh = &e.vehicle;
                let cost_scale = match e.objective_mode {
                    ObjectiveMode::Distance => 100.0 * e.n_customers() as f64,
                    ObjectiveMode::Energy => veh.battery_capacity * e.n_customers() as f64,
                };
                vec![
                    (state.battery / veh.battery_capacity).clamp(0.0, 1.0),
                    (state.clock / e.t_max).clamp(0.0, 1.0),
                    (state.load / veh.capacity).clamp(0.0, 1.0),
                    squash(state.cost / cost_scale),
                    e.customers().filter(|&c| state.served[c]).count() as f64
                        / e.n_customers() as f64,
                ]
            }
        };
        for (i, &s) in state.served.iter().enumerate() {
            nodes.data[i * NODE_FEATURES + 6] = f64::from(u8::from(s));
        }
        nodes.data[state.position * NODE_FEATURES + 7] = 1.0;
        Ok(Self {
            nodes,
            global,
            current: state.position,
            legal,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.rows
    }

    pub fn check_shape(&self) -> Result<()> {
        let n = self.nodes.rows;
        if self.nodes.cols != NODE_FEATURES
            || self.global.len() != GLOBAL_FEATURES
            || self.legal.len() != n
            || self.current >= n
        {
            return Err(Error::Dimension(format!(
                "features {}x{} with {} globals, {} mask entries, current {}",
                n,
                self.nodes.cols,
                self.global.len(),
                self.legal.len(),
                self.current
            )));
        }
        Ok(())
    }

    /// Whether both feature sets describe the same instance.
    pub fn same_instance(&self, other: &StateFeatures) -> bool {
        self.nodes.rows == other.nodes.rows
            && self
                .nodes
                .data
                .chunks(NODE_FEATURES)
                .zip(other.nodes.data.chunks(NODE_FEATURES))
                .all(|(a, b)| a[..STATIC_COLUMNS] == b[..STATIC_COLUMNS])
    }
}

fn squash(x: f64) -> f64 {
    let x = x.max(0.0);
    x / (1.0 + x)
}
