//! Derivative-free minimization in two dimensions.

#[derive(Debug, Clone, Copy)]
pub struct Minimum {
    pub point: [f64; 2],
    pub value: f64,
    pub converged: bool,
    #[allow(dead_code)]
    pub evaluations: usize,
}

/// Nelder–Mead simplex search.
///
/// Stops once the objective spread over the simplex drops below `ftol`, then
/// restarts once from the best vertex so a collapsed simplex cannot stall.
pub fn nelder_mead<F>(f: F, start: [f64; 2], steps: [f64; 2], ftol: f64, max_evals: usize) -> Minimum
where
    F: Fn([f64; 2]) -> f64,
{
    let eval = |x: [f64; 2]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut evals = 0usize;
    let mut best = (start, eval(start));
    evals += 1;
    let mut converged = false;
    for _round in 0..2 {
        let (x0, f0) = best;
        let mut simplex = [
            (x0, f0),
            ([x0[0] + steps[0], x0[1]], eval([x0[0] + steps[0], x0[1]])),
            ([x0[0], x0[1] + steps[1]], eval([x0[0], x0[1] + steps[1]])),
        ];
        evals += 2;
        converged = false;
        while evals < max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            if (simplex[2].1 - simplex[0].1).abs() <= ftol {
                converged = true;
                break;
            }
            let centroid = [
                0.5 * (simplex[0].0[0] + simplex[1].0[0]),
                0.5 * (simplex[0].0[1] + simplex[1].0[1]),
            ];
            let worst = simplex[2];
            let along = |t: f64| {
                [
                    centroid[0] + t * (worst.0[0] - centroid[0]),
                    centroid[1] + t * (worst.0[1] - centroid[1]),
                ]
            };
            let xr = along(-1.0);
            let fr = eval(xr);
            evals += 1;
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = eval(xe);
                evals += 1;
                simplex[2] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[1].1 {
                simplex[2] = (xr, fr);
            } else {
                let (xc, fc) = if fr < worst.1 {
                    let xc = along(-0.5);
                    (xc, eval(xc))
                } else {
                    let xc = along(0.5);
                    (xc, eval(xc))
                };
                evals += 1;
                if fc < worst.1.min(fr) {
                    simplex[2] = (xc, fc);
                } else {
                    let b = simplex[0].0;
                    for v in simplex.iter_mut().skip(1) {
                        let x = [b[0] + 0.5 * (v.0[0] - b[0]), b[1] + 0.5 * (v.0[1] - b[1])];
                        *v = (x, eval(x));
                    }
                    evals += 2;
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let improved = best.1 - simplex[0].1;
        if simplex[0].1 <= best.1 {
            best = simplex[0];
        }
        if !converged || improved <= ftol {
            break;
        }
    }
    Minimum {
        point: best.0,
        value: best.1,
        converged,
        evaluations: evals,
    }
}
