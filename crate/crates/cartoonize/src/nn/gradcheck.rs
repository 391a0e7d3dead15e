//! Central finite-difference gradient checking. Everything differentiable
//! in the crate is validated against this oracle at `f64`.

/// A scalar-valued function of named flat parameter slots.
///
/// `loss` evaluates the function, `analytic` returns the backprop gradients
/// per slot, and `perturb` nudges one scalar. The checker clones the target
/// per evaluation, so implementations stay side-effect free.
pub trait GradCheckTarget: Clone {
    fn loss(&self) -> f64;
    fn analytic(&self) -> Vec<(String, Vec<f64>)>;
    fn perturb(&mut self, slot: &str, idx: usize, delta: f64);
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<(String, usize, f64, f64)>, // slot, index, analytic, numeric
}

/// Compare analytic gradients against central differences.
///
/// Entries where both gradients are below 1e-7 in magnitude are treated as
/// zero and skipped; everything else must satisfy the relative tolerance.
pub fn run_grad_check<T: GradCheckTarget>(target: &T, h: f64) -> GradCheckReport {
    let analytic = target.analytic();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for (slot, grads) in &analytic {
        for (idx, &a) in grads.iter().enumerate() {
            let mut plus = target.clone();
            plus.perturb(slot, idx, h);
            let lp = plus.loss();
            let mut minus = target.clone();
            minus.perturb(slot, idx, -h);
            let lm = minus.loss();
            let n = (lp - lm) / (2.0 * h);

            let denom = a.abs().max(n.abs());
            if denom < 1e-7 {
                continue;
            }
            let rel = (a - n).abs() / denom;
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((slot.clone(), idx, a, n));
            }
        }
    }
    report
}

/// `run_grad_check` plus an assertion; panics with the worst offender.
pub fn check_grads<T: GradCheckTarget>(target: &T, h: f64, rel_tol: f64) {
    let report = run_grad_check(target, h);
    assert!(
        report.checked > 0,
        "gradient check exercised no nonzero gradients"
    );
    if report.max_rel_error >= rel_tol {
        let (slot, idx, a, n) = report.worst.clone().unwrap();
        panic!(
            "gradient mismatch in slot `{slot}` at {idx}: analytic={a:.10e} numeric={n:.10e} \
             rel={:.3e} (tol {rel_tol:.1e}, {} entries checked)",
            report.max_rel_error, report.checked
        );
    }
}
