//! Scalar maximization: expanding grid bracket plus golden-section search.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Settings for [`maximize`].
#[derive(Debug, Clone, Copy)]
pub struct BracketSearch {
    /// Half-width of the first scan around the origin.
    pub initial_span: f64,
    pub expansion: f64,
    pub max_expansions: usize,
    /// Grid points per scan.
    pub scan_points: usize,
    pub xtol: f64,
    /// Golden-section is declared stalled when this many consecutive
    /// reductions improve the best value by less than `stall_tol`.
    pub stall_iterations: usize,
    pub stall_tol: f64,
    pub fallback_points: usize,
}

impl Default for BracketSearch {
    fn default() -> Self {
        Self {
            initial_span: 10.0,
            expansion: 4.0,
            max_expansions: 5,
            scan_points: 41,
            xtol: 1e-6,
            stall_iterations: 60,
            stall_tol: 1e-12,
            fallback_points: 200,
        }
    }
}

/// Outcome of a maximization, including every evaluation made.
#[derive(Debug, Clone)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
    pub used_fallback: bool,
    pub trace: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub enum SearchError {
    /// The best grid value sat on the scan boundary for every expansion.
    NoBracket { trace: Vec<(f64, f64)> },
    /// Every evaluated point was infeasible.
    Infeasible { trace: Vec<(f64, f64)> },
}

/// Maximize `f` starting from a symmetric scan around zero.
///
/// `f` returns `None` for infeasible points; they are skipped.
pub fn maximize<F>(mut f: F, cfg: &BracketSearch) -> std::result::Result<Maximum, SearchError>
where
    F: FnMut(f64) -> Option<f64>,
{
    let mut trace: Vec<(f64, f64)> = Vec::new();
    let mut eval = |x: f64, trace: &mut Vec<(f64, f64)>| -> f64 {
        let v = f(x).filter(|v| v.is_finite()).unwrap_or(f64::NEG_INFINITY);
        trace.push((x, v));
        v
    };

    let mut span = cfg.initial_span;
    let mut bracket = None;
    for _ in 0..=cfg.max_expansions {
        let n = cfg.scan_points.max(3);
        let grid: Vec<f64> = (0..n)
            .map(|k| -span + 2.0 * span * k as f64 / (n - 1) as f64)
            .collect();
        let mut values = Vec::with_capacity(n);
        for &x in &grid {
            values.push(eval(x, &mut trace));
        }
        // the origin is always part of the design space
        let zero = if n % 2 == 1 {
            values[n / 2]
        } else {
            eval(0.0, &mut trace)
        };
        let (best, &best_v) = values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .unwrap();
        if best_v == f64::NEG_INFINITY && zero == f64::NEG_INFINITY {
            span *= cfg.expansion;
            continue;
        }
        if best > 0 && best < n - 1 {
            bracket = Some((grid[best - 1], grid[best], grid[best + 1]));
            break;
        }
        span *= cfg.expansion;
    }

    let Some((lo, _, hi)) = bracket else {
        if trace.iter().all(|p| p.1 == f64::NEG_INFINITY) {
            return Err(SearchError::Infeasible { trace });
        }
        return Err(SearchError::NoBracket { trace });
    };

    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c, &mut trace);
    let mut fd = eval(d, &mut trace);
    let mut best_so_far = fc.max(fd);
    let mut stalled = 0usize;
    let mut used_fallback = false;
    while (b - a).abs() > cfg.xtol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c, &mut trace);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d, &mut trace);
        }
        let now = fc.max(fd);
        if now > best_so_far + cfg.stall_tol {
            stalled = 0;
        } else {
            stalled += 1;
        }
        best_so_far = best_so_far.max(now);
        if stalled >= cfg.stall_iterations {
            used_fallback = true;
            let n = cfg.fallback_points.max(2);
            for k in 0..n {
                let x = lo + (hi - lo) * k as f64 / (n - 1) as f64;
                eval(x, &mut trace);
            }
            break;
        }
    }

    let evaluations = trace.len();
    let &(x, value) = trace
        .iter()
        .max_by(|p, q| {
            p.1.partial_cmp(&q.1)
                .unwrap()
                .then(q.0.abs().partial_cmp(&p.0.abs()).unwrap())
        })
        .unwrap();
    Ok(Maximum {
        x,
        value,
        evaluations,
        used_fallback,
        trace,
    })
}
