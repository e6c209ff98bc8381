use rand::Rng;
use rand_distr::Exp1;

use crate::graph::GraphWithBoundary;
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    /// A clock rang but nothing changed.
    Idle,
    /// Exchange across an edge whose endpoints differ.
    Swap(usize, usize),
    Birth(usize),
    Death(usize),
}

/// Uniformised event table with fixed total rate
/// `Λ = T(|E| + Σ_a (r₊(a) + r₋(a)))`. Each event picks an edge or a
/// boundary attempt in proportion to its rate; attempts that would not
/// change the configuration come back as [`Move::Idle`].
#[derive(Debug, Clone)]
pub struct EventKernel {
    edges: Vec<(usize, usize)>,
    /// Boundary attempts: (vertex, is_birth).
    attempts: Vec<(usize, bool)>,
    /// Cumulative boundary rates, ending at the boundary total.
    cumulative: Vec<f64>,
    edge_rate: f64,
    total: f64,
}

impl EventKernel {
    pub fn new(graph: &GraphWithBoundary) -> Self {
        let t = graph.time_scale();
        let mut attempts = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (k, &a) in graph.boundary().iter().enumerate() {
            let r = graph.rates()[k];
            for (birth, rate) in [(true, r.plus), (false, r.minus)] {
                if rate > 0.0 {
                    acc += t * rate;
                    attempts.push((a, birth));
                    cumulative.push(acc);
                }
            }
        }
        let edge_rate = t * graph.num_edges() as f64;
        Self { edges: graph.edges().to_vec(), attempts, cumulative, edge_rate, total: edge_rate + acc }
    }

    pub fn total_rate(&self) -> f64 {
        self.total
    }

    /// Waiting time to the next clock ring and the move it would make.
    /// The configuration is left untouched.
    pub fn draw(&self, eta: &[u8], rng: &mut Stream) -> (f64, Move) {
        let e: f64 = rng.sample(Exp1);
        let dt = e / self.total;
        let u = rng.gen::<f64>() * self.total;
        let mv = if u < self.edge_rate {
            let i = ((u / self.edge_rate * self.edges.len() as f64) as usize).min(self.edges.len() - 1);
            let (x, y) = self.edges[i];
            if eta[x] != eta[y] {
                Move::Swap(x, y)
            } else {
                Move::Idle
            }
        } else {
            let v = u - self.edge_rate;
            let i = self.cumulative.partition_point(|&c| c <= v).min(self.attempts.len() - 1);
            match self.attempts[i] {
                (a, true) if eta[a] == 0 => Move::Birth(a),
                (a, false) if eta[a] == 1 => Move::Death(a),
                _ => Move::Idle,
            }
        };
        (dt, mv)
    }

    pub fn apply(&self, eta: &mut [u8], mv: Move) {
        match mv {
            Move::Idle => {}
            Move::Swap(x, y) => eta.swap(x, y),
            Move::Birth(a) => eta[a] = 1,
            Move::Death(a) => eta[a] = 0,
        }
    }

    /// Draws and applies one event.
    pub fn next(&self, eta: &mut [u8], rng: &mut Stream) -> (f64, Move) {
        let (dt, mv) = self.draw(eta, rng);
        self.apply(eta, mv);
        (dt, mv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_segment, build_torus, FaceSpec};
    use crate::rng::stream;

    #[test]
    fn rates_add_up() {
        let g = build_segment(4, FaceSpec::open(0.5, 0.25, 0.0), FaceSpec::Closed).unwrap();
        let k = EventKernel::new(&g);
        assert!((k.total_rate() - 16.0 * (4.0 + 0.75)).abs() < 1e-12);
    }

    #[test]
    fn empty_closed_system_stays_empty() {
        let g = build_torus(1, 8).unwrap();
        let k = EventKernel::new(&g);
        let mut eta = vec![0u8; 8];
        let mut rng = stream(1, 0, 0);
        for _ in 0..10_000 {
            assert_eq!(k.next(&mut eta, &mut rng).1, Move::Idle);
        }
        assert!(eta.iter().all(|&b| b == 0));
    }
}
