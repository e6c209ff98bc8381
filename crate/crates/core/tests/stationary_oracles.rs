//! Independent oracles for the stationary density, the two-point
//! correlations and the mean exit times.

use cutoff_core::rng::stream;
use cutoff_core::simulator::{EventKernel, Move};
use cutoff_core::stationary::mean_exit_times;
use cutoff_core::*;
use rand::Rng;
use rand_distr::Exp1;

/// Stationary law of the full exclusion chain on `2^|V|` states, by power
/// iteration of the uniformised transition matrix.
fn exact_stationary_law(g: &GraphWithBoundary) -> Vec<f64> {
    let nv = g.num_vertices();
    assert!(nv <= 12);
    let ns = 1usize << nv;
    let t = g.time_scale();
    // Outgoing (target, rate) per state.
    let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ns];
    for (s, o) in out.iter_mut().enumerate() {
        for &(x, y) in g.edges() {
            if (s >> x & 1) != (s >> y & 1) {
                o.push((s ^ (1 << x) ^ (1 << y), t));
            }
        }
        for (k, &a) in g.boundary().iter().enumerate() {
            let r = g.rates()[k];
            if s >> a & 1 == 0 {
                o.push((s | 1 << a, t * r.plus));
            } else {
                o.push((s & !(1 << a), t * r.minus));
            }
        }
    }
    let lambda = out.iter().map(|o| o.iter().map(|e| e.1).sum::<f64>()).fold(0.0, f64::max) * 1.01;
    let mut pi = vec![1.0 / ns as f64; ns];
    for _ in 0..200_000 {
        let mut next = pi.clone();
        for (s, o) in out.iter().enumerate() {
            for &(u, r) in o {
                let flow = pi[s] * r / lambda;
                next[s] -= flow;
                next[u] += flow;
            }
        }
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff < 1e-17 {
            break;
        }
    }
    pi
}

fn moments(pi: &[f64], nv: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rho = vec![0.0; nv];
    let mut two = vec![vec![0.0; nv]; nv];
    for (s, &p) in pi.iter().enumerate() {
        for x in 0..nv {
            if s >> x & 1 == 1 {
                rho[x] += p;
                for y in 0..nv {
                    if s >> y & 1 == 1 {
                        two[x][y] += p;
                    }
                }
            }
        }
    }
    (rho, two)
}

fn nonequilibrium_segment(theta: f64) -> GraphWithBoundary {
    build_segment(8, FaceSpec::open(0.2, 0.8, theta), FaceSpec::open(0.8, 0.2, theta)).unwrap()
}

#[test]
fn correlations_match_the_exact_law() {
    for theta in [0.0, 1.0] {
        let g = nonequilibrium_segment(theta);
        let nv = g.num_vertices();
        let pi = exact_stationary_law(&g);
        let (rho_exact, two) = moments(&pi, nv);
        let rho = solve_stationary_density(&g, None).unwrap().rho_ss;
        for x in 0..nv {
            assert!((rho[x] - rho_exact[x]).abs() < 1e-10, "θ={theta} x={x}: {} vs {}", rho[x], rho_exact[x]);
        }
        let phi = stationary_correlation(&g, &rho).unwrap();
        for x in 0..nv {
            for y in 0..nv {
                if x != y {
                    let exact = two[x][y] - rho_exact[x] * rho_exact[y];
                    assert!((phi.get(x, y) - exact).abs() < 1e-10, "θ={theta} ({x},{y}): {} vs {exact}", phi.get(x, y));
                    assert!(phi.get(x, y) <= 1e-12);
                }
            }
        }
        assert!(phi.max_off_diagonal() < -1e-4, "correlations should be visibly negative");
    }
}

#[test]
fn correlations_match_a_long_stationary_run() {
    let g = nonequilibrium_segment(0.0);
    let nv = g.num_vertices();
    let rho = solve_stationary_density(&g, None).unwrap().rho_ss;
    let phi = stationary_correlation(&g, &rho).unwrap();
    let kernel = EventKernel::new(&g);
    let mut rng = stream(2024, 0, 0);
    let mut eta: Vec<u8> = rho.iter().map(|&p| u8::from(rng.gen::<f64>() < p)).collect();
    for _ in 0..100_000 {
        kernel.next(&mut eta, &mut rng);
    }
    // States seen just after the events of the uniformised clock are
    // stationary, so plain event averages are unbiased. Batch means give
    // the standard errors.
    let batches = 100;
    let per_batch = 100_000;
    let mut batch_est = vec![vec![vec![0.0; nv]; nv]; batches];
    let mut batch_rho = vec![vec![0.0; nv]; batches];
    for b in 0..batches {
        let mut two = vec![vec![0u64; nv]; nv];
        let mut one = vec![0u64; nv];
        for _ in 0..per_batch {
            kernel.next(&mut eta, &mut rng);
            for x in 0..nv {
                if eta[x] == 1 {
                    one[x] += 1;
                    for y in x + 1..nv {
                        two[x][y] += eta[y] as u64;
                    }
                }
            }
        }
        for x in 0..nv {
            batch_rho[b][x] = one[x] as f64 / per_batch as f64;
            for y in x + 1..nv {
                batch_est[b][x][y] = two[x][y] as f64 / per_batch as f64;
            }
        }
    }
    let mean = |f: &dyn Fn(usize) -> f64| (0..batches).map(f).sum::<f64>() / batches as f64;
    for x in 0..nv {
        for y in x + 1..nv {
            let cov = |b: usize| batch_est[b][x][y] - rho[x] * rho[y];
            let m = mean(&cov);
            let sd = ((0..batches).map(|b| (cov(b) - m).powi(2)).sum::<f64>() / (batches - 1) as f64).sqrt();
            let se = sd / (batches as f64).sqrt();
            assert!((m - phi.get(x, y)).abs() < 3.0 * se, "({x},{y}): {m} vs {} (se {se})", phi.get(x, y));
        }
        let m = mean(&|b| batch_rho[b][x]);
        let sd = ((0..batches).map(|b| (batch_rho[b][x] - m).powi(2)).sum::<f64>() / (batches - 1) as f64).sqrt();
        assert!((m - rho[x]).abs() < 3.0 * sd / (batches as f64).sqrt(), "ρ({x}): {m} vs {}", rho[x]);
    }
}

#[test]
fn exit_times_match_random_walkers() {
    let g = build_segment(16, FaceSpec::open(0.3, 0.7, 0.0), FaceSpec::open(0.5, 0.5, 0.0)).unwrap();
    let exact = mean_exit_times(&g).unwrap();
    let t = g.time_scale();
    let walkers = 100_000;
    for start in [0usize, 5, 8] {
        let mut rng = stream(77, start as u64, 0);
        let mut times = Vec::with_capacity(walkers);
        for _ in 0..walkers {
            let mut x = start;
            let mut clock = 0.0;
            loop {
                let kill = g.boundary_slot(x).map_or(0.0, |k| t * g.rates()[k].minus);
                let hop = t * g.degree(x) as f64;
                let total = hop + kill;
                clock += rng.sample::<f64, _>(Exp1) / total;
                let u = rng.gen::<f64>() * total;
                if u >= hop {
                    break;
                }
                let nbrs = g.neighbors(x);
                x = nbrs[((u / t) as usize).min(nbrs.len() - 1)];
            }
            times.push(clock);
        }
        let m = times.iter().sum::<f64>() / walkers as f64;
        let sd = (times.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (walkers - 1) as f64).sqrt();
        let se = sd / (walkers as f64).sqrt();
        assert!((m - exact[start]).abs() < 3.0 * se, "start {start}: {m} vs {} (se {se})", exact[start]);
    }
}

#[test]
fn simulated_moves_are_exclusion_moves() {
    let g = nonequilibrium_segment(0.0);
    let kernel = EventKernel::new(&g);
    let mut rng = stream(1, 0, 0);
    let mut eta = vec![0u8; 9];
    for _ in 0..50_000 {
        let before = eta.clone();
        match kernel.next(&mut eta, &mut rng).1 {
            Move::Idle => assert_eq!(before, eta),
            Move::Swap(x, y) => {
                assert!(g.are_adjacent(x, y) && before[x] != before[y]);
                assert_eq!((eta[x], eta[y]), (before[y], before[x]));
            }
            Move::Birth(a) => assert!(g.boundary_slot(a).is_some() && before[a] == 0 && eta[a] == 1),
            Move::Death(a) => assert!(g.boundary_slot(a).is_some() && before[a] == 1 && eta[a] == 0),
        }
    }
}
