use crate::numcore::{Matrix, ParamStore, Tape, Var};

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Derivative magnitude below which errors are measured absolutely.
pub const REL_FLOOR: f64 = 1e-6;

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(param name, flat index)` of the worst entry.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst entry.
    pub worst_pair: (f64, f64),
    pub entries_checked: usize,
}

/// Compares `backward()` gradients of `loss` against central differences
/// `(f(θ+h) - f(θ-h)) / 2h` over every scalar of every parameter.
///
/// Relative error uses `max(|analytic|, |numeric|, REL_FLOOR)` as
/// denominator: central differences at `h = 1e-5` carry roughly `1e-11`
/// of rounding noise, so smaller derivatives are compared absolutely.
pub fn finite_diff_check<F>(params: &ParamStore<f64>, loss: F, h: f64) -> GradCheckReport
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>) -> Var,
{
    let mut tape = Tape::new();
    let l = loss(&mut tape, params);
    let mut grads = tape.backward(l);
    let analytic = params.collect_gradients(&tape, &mut grads);

    let eval = |p: &ParamStore<f64>| -> f64 {
        let mut t = Tape::new();
        let v = loss(&mut t, p);
        t.value(v).item()
    };

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_pair: (0.0, 0.0),
        entries_checked: 0,
    };
    for id in params.ids() {
        for i in 0..params.get(id).len() {
            let orig = params.get(id).as_slice()[i];
            let mut at = |delta: f64| {
                work.get_mut(id).as_mut_slice()[i] = orig + delta;
                eval(&work)
            };
            let (fp, fm) = (at(h), at(-h));
            work.get_mut(id).as_mut_slice()[i] = orig;

            let numeric = (fp - fm) / (2.0 * h);
            let exact = analytic[id.0].as_slice()[i];
            let denom = exact.abs().max(numeric.abs()).max(REL_FLOOR);
            let err = (exact - numeric).abs() / denom;
            report.entries_checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((params.name(id).to_string(), i));
                report.worst_pair = (exact, numeric);
            }
        }
    }
    report
}

/// Convenience wrapper for a single-matrix function.
pub fn check_single<F>(x: &Matrix<f64>, f: F) -> f64
where
    F: Fn(&mut Tape<f64>, Var) -> Var,
{
    let mut store = ParamStore::new();
    let id = store.add("x", x.clone());
    finite_diff_check(
        &store,
        |tape, p| {
            let v = p.bind(tape, id);
            f(tape, v)
        },
        DEFAULT_STEP,
    )
    .max_rel_error
}

