//! Numerical building blocks: quadrature, ODE stepping, special functions, least squares.

pub mod gamma;
pub mod lm;
pub mod ode;
pub mod quadrature;

/// sin(x)/x with sinc(0) = 1; series below |x| = 1e-4 avoids cancellation.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// 1 − sinc(x), accurate near zero.
pub fn one_minus_sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        x2 / 6.0 - x2 * x2 / 120.0
    } else {
        1.0 - x.sin() / x
    }
}

/// Maps `f` over `items` on scoped threads, one contiguous chunk per available core.
pub fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len());
    if threads <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> =
            items.chunks(chunk).map(|part| scope.spawn(move || part.iter().map(f).collect::<Vec<U>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker thread panicked")).collect()
    })
}

/// Ordinary least-squares line `y = intercept + slope x`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}
