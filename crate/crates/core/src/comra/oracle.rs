//! Independent reference solvers for the ComRA LP and random instance
//! generators. Used by the verification suite; nothing here feeds the
//! allocators themselves.

use rand::Rng;

use super::{build_instance, content_accuracies, ComraInstance, ComraUser};
use crate::config::SystemConfig;
use crate::error::Result;
use crate::scenario::draw_scenario;

/// Optimum of the ComRA LP through its Lagrangian dual.
///
/// Primal (after shifting by the minimums): maximize `sum(l_k y_k)` with
/// `0 <= y_k <= u_k` and `sum(y_k) <= R`. The dual
/// `min_{t >= 0} t R + sum(u_k (l_k - t)^+)` is convex piecewise linear, so
/// its minimum sits at `t = 0` or at one of the `l_k`. Returns `None` when
/// the minimums alone exceed the budget.
pub fn lp_dual_optimum(instance: &ComraInstance) -> Option<f64> {
    let eligible: Vec<&ComraUser> = instance.users.iter().filter(|u| u.eligible()).collect();
    let base_energy: f64 = eligible.iter().map(|u| u.e_min).sum();
    let residual = instance.e_r - base_energy;
    if residual < 0.0 || (eligible.is_empty() && instance.e_r < 0.0) {
        return None;
    }
    let base_value: f64 = eligible.iter().map(|u| u.lambda * u.e_min).sum();
    let dual = |t: f64| {
        t * residual
            + eligible
                .iter()
                .map(|u| (u.e_max - u.e_min) * (u.lambda - t).max(0.0))
                .sum::<f64>()
    };
    let best = std::iter::once(0.0)
        .chain(eligible.iter().map(|u| u.lambda))
        .map(dual)
        .fold(f64::INFINITY, f64::min);
    let k = instance.users.len().max(1) as f64;
    Some((base_value + best) / k)
}

/// Best objective over a uniform grid of `levels` points on every eligible
/// user's `[e_min, e_max]` subject to the budget, or `None` if no grid point
/// is feasible.
///
/// Exhaustive depth-first search over the grid. Subtrees are skipped only
/// when a weak-duality bound shows they cannot beat the incumbent, so the
/// result equals full enumeration.
pub fn grid_optimum(instance: &ComraInstance, levels: usize) -> Option<f64> {
    assert!(levels >= 2);
    if instance.e_r < 0.0 {
        return None;
    }
    let mut users: Vec<&ComraUser> = instance.users.iter().filter(|u| u.eligible()).collect();
    users.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));
    let grids: Vec<Vec<f64>> = users
        .iter()
        .map(|u| {
            let step = (u.e_max - u.e_min) / (levels - 1) as f64;
            (0..levels).map(|i| if i == levels - 1 { u.e_max } else { u.e_min + step * i as f64 }).collect()
        })
        .collect();
    let mut search = GridSearch { users: &users, grids: &grids, best: None };
    search.descend(0, instance.e_r, 0.0);
    search.best.map(|b| b / instance.users.len().max(1) as f64)
}

struct GridSearch<'a> {
    users: &'a [&'a ComraUser],
    grids: &'a [Vec<f64>],
    best: Option<f64>,
}

impl GridSearch<'_> {
    /// Upper bound on the value users `from..` can add with `budget`, from
    /// the dual `t * R + sum(u (l - t)^+)` at every breakpoint `t`. Each
    /// such `t >= 0` bounds the LP relaxation from above.
    fn bound(&self, from: usize, budget: f64) -> Option<f64> {
        let rest = &self.users[from..];
        let need: f64 = rest.iter().map(|u| u.e_min).sum();
        if need > budget {
            return None;
        }
        let base: f64 = rest.iter().map(|u| u.lambda * u.e_min).sum();
        let room = budget - need;
        let dual = |t: f64| {
            t * room + rest.iter().map(|u| (u.e_max - u.e_min) * (u.lambda - t).max(0.0)).sum::<f64>()
        };
        let best_t = rest.iter().map(|u| u.lambda.max(0.0)).chain([0.0]).map(dual).fold(f64::INFINITY, f64::min);
        Some(base + best_t)
    }

    fn descend(&mut self, depth: usize, budget: f64, value: f64) {
        if depth == self.users.len() {
            if self.best.is_none_or(|b| value > b) {
                self.best = Some(value);
            }
            return;
        }
        let Some(bound) = self.bound(depth, budget) else {
            return;
        };
        // small slack so rounding in the bound never hides a grid point
        if self.best.is_some_and(|b| value + bound * (1.0 + 1e-12) + 1e-15 < b) {
            return;
        }
        let u = self.users[depth];
        for &e in self.grids[depth].iter().rev() {
            if e > budget {
                continue;
            }
            let remaining = budget - e;
            let Some(rest) = self.bound(depth + 1, remaining) else {
                continue;
            };
            let here = value + u.lambda * e;
            if self.best.is_some_and(|b| here + rest * (1.0 + 1e-12) + 1e-15 < b) {
                // lower levels only shrink this user's term and loosen the
                // rest by at most the same energy times a smaller slope
                if u.lambda >= self.users[depth + 1..].iter().map(|v| v.lambda).fold(0.0, f64::max) {
                    break;
                }
                continue;
            }
            self.descend(depth + 1, remaining, here);
        }
    }
}

/// Objective change from moving one grid cell on the steepest user.
pub fn grid_increment(instance: &ComraInstance, levels: usize) -> f64 {
    let k = instance.users.len().max(1) as f64;
    instance
        .users
        .iter()
        .filter(|u| u.eligible())
        .map(|u| u.lambda * (u.e_max - u.e_min) / (levels - 1) as f64)
        .fold(0.0, f64::max)
        / k
}

/// Instance built from the physical model: random users, sensing energies
/// and steps, with the budget drawn so that every eligible minimum fits.
pub fn physical_instance<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<ComraInstance> {
    let config = SystemConfig { num_users: k, ..SystemConfig::default() };
    let scenario = draw_scenario(&config, rng)?;
    let sensing: Vec<f64> = (0..k).map(|_| rng.random_range(0.005..config.e_s_max_j)).collect();
    let steps: Vec<u32> = (0..k).map(|_| rng.random_range(config.z_min..=config.z_max)).collect();
    let thetas = content_accuracies(&sensing, &steps, &config)?;
    let mut inst = build_instance(&scenario, &sensing, &steps, &thetas, &config);
    let eligible = inst.users.iter().filter(|u| u.eligible());
    let need: f64 = eligible.clone().map(|u| u.e_min).sum();
    let room: f64 = eligible.map(|u| u.e_max - u.e_min).sum();
    inst.e_r = need + rng.random_range(0.0..1.2) * room;
    Ok(inst)
}

/// Synthetic all-eligible instance with a budget covering the minimums.
pub fn synthetic_instance<R: Rng + ?Sized>(k: usize, rng: &mut R) -> ComraInstance {
    let users: Vec<ComraUser> = (0..k)
        .map(|_| {
            let e_min = rng.random_range(0.0..0.05);
            ComraUser {
                theta: rng.random_range(0.3..0.95),
                gain: 1e-10,
                e_min,
                e_max: e_min + rng.random_range(0.0..0.1),
                lambda: rng.random_range(0.5..15.0),
            }
        })
        .collect();
    let need: f64 = users.iter().map(|u| u.e_min).sum();
    let room: f64 = users.iter().map(|u| u.e_max - u.e_min).sum();
    let e_r = need + rng.random_range(0.0..1.0) * room;
    ComraInstance { users, e_r }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comra::rce_allocate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dual_matches_hand_solution() {
        let users = vec![
            ComraUser { theta: 1.0, gain: 1.0, e_min: 0.1, e_max: 0.3, lambda: 1.0 },
            ComraUser { theta: 1.0, gain: 1.0, e_min: 0.2, e_max: 0.3, lambda: 5.0 },
        ];
        let inst = ComraInstance { users, e_r: 0.4 };
        // 0.1 residual goes to the lambda = 5 user: 1*0.1 + 5*0.3 = 1.6
        assert!((lp_dual_optimum(&inst).unwrap() - 0.8).abs() < 1e-12);
        let short = ComraInstance { e_r: 0.25, ..inst };
        assert!(lp_dual_optimum(&short).is_none());
    }

    #[test]
    fn grid_never_beats_the_lp() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            let inst = synthetic_instance(3, &mut rng);
            let lp = lp_dual_optimum(&inst).unwrap();
            let grid = grid_optimum(&inst, 50).unwrap();
            assert!(grid <= lp + 1e-12);
            assert!(grid >= lp - 3.0 * grid_increment(&inst, 50) - 1e-12);
            assert!((inst.objective(&rce_allocate(&inst)) - lp).abs() < 1e-9);
        }
    }

    fn enumerate(inst: &ComraInstance, levels: usize) -> Option<f64> {
        let users: Vec<&ComraUser> = inst.users.iter().filter(|u| u.eligible()).collect();
        let mut best: Option<f64> = None;
        let total = levels.pow(users.len() as u32);
        for code in 0..total {
            let (mut c, mut spent, mut value) = (code, 0.0, 0.0);
            for u in &users {
                let i = c % levels;
                c /= levels;
                let e = if i == levels - 1 { u.e_max } else { u.e_min + (u.e_max - u.e_min) / (levels - 1) as f64 * i as f64 };
                spent += e;
                value += u.lambda * e;
            }
            if spent <= inst.e_r && best.is_none_or(|b| value > b) {
                best = Some(value);
            }
        }
        best.map(|b| b / inst.users.len() as f64)
    }

    #[test]
    fn pruned_search_equals_plain_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..200 {
            let mut inst = synthetic_instance(1 + i % 4, &mut rng);
            // include budgets below the minimums
            inst.e_r *= rng.random_range(0.5..1.5);
            let (a, b) = (grid_optimum(&inst, 12), enumerate(&inst, 12));
            match (a, b) {
                (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} vs {y}"),
                (x, y) => assert_eq!(x, y),
            }
        }
    }
}
