/// Largest relative error between the analytic gradient returned by `f` and central
/// finite differences with step `h`.
///
/// `f` maps a parameter vector to `(loss, analytic gradient)`. Relative error per
/// coordinate is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(mut f: F, params: &[f64], h: f64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(params);
    assert_eq!(analytic.len(), params.len(), "gradient length");
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let plus = f(&p).0;
        p[i] = orig - h;
        let minus = f(&p).0;
        p[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}
