//! Derivative-free Nelder–Mead minimizer with dimension-adaptive
//! coefficients and restarts from the incumbent best point.

#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    /// Stop when the spread of objective values falls below
    /// `ftol · max(1, |f_best|)`.
    pub ftol: f64,
    /// Stop when every vertex lies within `xtol` of the best one.
    pub xtol: f64,
    pub max_evaluations: usize,
    /// Fresh simplices built around the incumbent after convergence.
    pub restarts: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            ftol: 1e-10,
            xtol: 1e-12,
            max_evaluations: 100_000,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl NelderMead {
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut objective: F, start: &[f64]) -> Minimum {
        let evaluations = std::cell::Cell::new(0usize);
        let mut eval = |x: &[f64]| {
            evaluations.set(evaluations.get() + 1);
            let value = objective(x);
            if value.is_nan() {
                f64::INFINITY
            } else {
                value
            }
        };

        let mut best_x = start.to_vec();
        let mut best_value = eval(&best_x);
        let mut converged = false;
        let mut step = self.initial_step;
        for _ in 0..=self.restarts {
            let budget = self.max_evaluations.saturating_sub(evaluations.get());
            let (x, value, used, ok) = self.run(&mut eval, &best_x, best_value, step, budget);
            let improvement = best_value - value;
            if value <= best_value {
                best_x = x;
                best_value = value;
            }
            converged = ok;
            if !ok || used >= budget || improvement <= self.ftol * best_value.abs().max(1.0) {
                break;
            }
            step *= 0.5;
        }
        Minimum {
            x: best_x,
            value: best_value,
            evaluations: evaluations.get(),
            converged,
        }
    }

    fn run<F: FnMut(&[f64]) -> f64>(
        &self,
        eval: &mut F,
        start: &[f64],
        start_value: f64,
        step: f64,
        budget: usize,
    ) -> (Vec<f64>, f64, usize, bool) {
        let n = start.len();
        let nf = n as f64;
        let (alpha, gamma) = (1.0, 1.0 + 2.0 / nf);
        let (rho, sigma) = (0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

        let mut used = 0;
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((start.to_vec(), start_value));
        for i in 0..n {
            let mut x = start.to_vec();
            x[i] += step;
            let f = eval(&x);
            used += 1;
            simplex.push((x, f));
        }

        let along = |from: &[f64], to: &[f64], t: f64| -> Vec<f64> {
            from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
        };

        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            let spread = worst - best;
            let size = simplex[1..]
                .iter()
                .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if spread <= self.ftol * best.abs().max(1.0) || size <= self.xtol {
                let (x, f) = simplex.swap_remove(0);
                return (x, f, used, true);
            }
            if used >= budget {
                let (x, f) = simplex.swap_remove(0);
                return (x, f, used, false);
            }

            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / nf;
                }
            }

            let reflected = along(&centroid, &simplex[n].0, -alpha);
            let f_reflected = eval(&reflected);
            used += 1;
            if f_reflected < best {
                let expanded = along(&centroid, &simplex[n].0, -alpha * gamma);
                let f_expanded = eval(&expanded);
                used += 1;
                simplex[n] = if f_expanded < f_reflected {
                    (expanded, f_expanded)
                } else {
                    (reflected, f_reflected)
                };
                continue;
            }
            if f_reflected < simplex[n - 1].1 {
                simplex[n] = (reflected, f_reflected);
                continue;
            }
            let (contracted, f_contracted) = if f_reflected < worst {
                let x = along(&centroid, &reflected, rho);
                let f = eval(&x);
                (x, f)
            } else {
                let x = along(&centroid, &simplex[n].0, rho);
                let f = eval(&x);
                (x, f)
            };
            used += 1;
            if f_contracted < worst.min(f_reflected) {
                simplex[n] = (contracted, f_contracted);
                continue;
            }
            let anchor = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                vertex.0 = along(&anchor, &vertex.0, sigma);
                vertex.1 = eval(&vertex.0);
                used += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let rosenbrock = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let min = NelderMead::default().minimize(rosenbrock, &[-1.2, 1.0]);
        assert!(min.converged);
        assert!((min.x[0] - 1.0).abs() < 1e-4 && (min.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn minimizes_quadratic_in_many_dimensions() {
        let target: Vec<f64> = (0..16).map(|i| i as f64 * 0.1 - 0.7).collect();
        let bowl = |x: &[f64]| {
            x.iter()
                .zip(&target)
                .enumerate()
                .map(|(i, (a, b))| (1.0 + i as f64) * (a - b).powi(2))
                .sum::<f64>()
        };
        let nm = NelderMead {
            restarts: 10,
            ..NelderMead::default()
        };
        let min = nm.minimize(bowl, &[0.0; 16]);
        assert!(min.value < 1e-9, "value {}", min.value);
    }

    #[test]
    fn reports_budget_exhaustion() {
        let nm = NelderMead {
            max_evaluations: 20,
            ..NelderMead::default()
        };
        let min = nm.minimize(|x| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2), &[0.0, 0.0]);
        assert!(!min.converged);
        assert!(min.evaluations <= 25);
    }
}
