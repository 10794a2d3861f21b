//! Loss functions for optimized certainty equivalents, their convex
//! conjugates, and a numerical check of the standing assumptions.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::ext::ExtReal;
use crate::optim::golden_max;
use crate::scalar::{lit, to_f64, Scalar};

/// Effective domain `[lo, hi]` of the conjugate; `hi = None` means `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjDomain<T> {
    pub lo: T,
    pub hi: Option<T>,
}

impl<T: Scalar> ConjDomain<T> {
    pub fn contains(&self, z: T) -> bool {
        z >= self.lo && self.hi.map_or(true, |hi| z <= hi)
    }

    /// Strict interior.
    pub fn interior_contains(&self, z: T) -> bool {
        z > self.lo && self.hi.map_or(true, |hi| z < hi)
    }

    pub fn is_compact(&self) -> bool {
        self.hi.is_some()
    }
}

type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;
type ConjFn<T> = Arc<dyn Fn(T) -> ExtReal<T> + Send + Sync>;

#[derive(Clone)]
enum Kind<T> {
    Entropic,
    MonotoneMeanVariance,
    Avar { gamma: T },
    Custom { loss: ScalarFn<T>, conj: ConjFn<T> },
}

/// A loss `l` together with its conjugate `l*(z) = sup_x (xz - l(x))`.
#[derive(Clone)]
pub struct LossSpec<T> {
    name: String,
    smooth: bool,
    domain: ConjDomain<T>,
    kind: Kind<T>,
}

impl<T: Scalar> fmt::Debug for LossSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LossSpec")
            .field("name", &self.name)
            .field("smooth", &self.smooth)
            .field("domain", &self.domain)
            .finish()
    }
}

/// Looks up a preset by name. `avar` takes its tail level `γ ∈ (0, 1)` as the
/// first parameter.
pub fn preset<T: Scalar>(name: &str, params: &[T]) -> Result<LossSpec<T>> {
    match name {
        "entropic" => Ok(LossSpec::entropic()),
        "mmv" => Ok(LossSpec::monotone_mean_variance()),
        "avar" => {
            let gamma = *params
                .first()
                .ok_or_else(|| invalid("gamma", "avar requires a tail level"))?;
            LossSpec::avar(gamma)
        }
        other => Err(Error::UnknownLoss(other.to_string())),
    }
}

impl<T: Scalar> LossSpec<T> {
    /// `l(x) = e^x - 1`, giving `ρ(X) = log E[e^X]`.
    pub fn entropic() -> Self {
        Self {
            name: "entropic".into(),
            smooth: true,
            domain: ConjDomain { lo: T::zero(), hi: None },
            kind: Kind::Entropic,
        }
    }

    /// `l(x) = (((x + 1)^+)^2 - 1) / 2`.
    pub fn monotone_mean_variance() -> Self {
        Self {
            name: "mmv".into(),
            smooth: true,
            domain: ConjDomain { lo: T::zero(), hi: None },
            kind: Kind::MonotoneMeanVariance,
        }
    }

    /// `l(x) = x^+ / γ`, giving average value-at-risk at level `γ`.
    pub fn avar(gamma: T) -> Result<Self> {
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(invalid("gamma", format!("must lie in (0, 1), got {gamma}")));
        }
        Ok(Self {
            name: "avar".into(),
            smooth: false,
            domain: ConjDomain { lo: T::zero(), hi: Some(T::one() / gamma) },
            kind: Kind::Avar { gamma },
        })
    }

    /// A user-supplied pair. Nothing is verified here; run
    /// [`check_assumptions`] before trusting it.
    pub fn custom(
        name: impl Into<String>,
        smooth: bool,
        domain: ConjDomain<T>,
        loss: impl Fn(T) -> T + Send + Sync + 'static,
        conj: impl Fn(T) -> ExtReal<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            smooth,
            domain,
            kind: Kind::Custom { loss: Arc::new(loss), conj: Arc::new(conj) },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    pub fn conj_domain(&self) -> ConjDomain<T> {
        self.domain
    }

    /// Tail level for the AVaR preset.
    pub fn avar_level(&self) -> Option<T> {
        match self.kind {
            Kind::Avar { gamma } => Some(gamma),
            _ => None,
        }
    }

    #[inline]
    pub fn loss(&self, x: T) -> T {
        match &self.kind {
            Kind::Entropic => x.exp_m1(),
            Kind::MonotoneMeanVariance => {
                let p = (x + T::one()).max(T::zero());
                (p * p - T::one()) * lit(0.5)
            }
            Kind::Avar { gamma } => x.max(T::zero()) / *gamma,
            Kind::Custom { loss, .. } => loss(x),
        }
    }

    #[inline]
    pub fn conj(&self, z: T) -> ExtReal<T> {
        if !self.domain.contains(z) {
            return ExtReal::PosInf;
        }
        match &self.kind {
            Kind::Entropic => {
                if z == T::zero() {
                    ExtReal::Finite(T::one())
                } else {
                    ExtReal::Finite(z * z.ln() - z + T::one())
                }
            }
            Kind::MonotoneMeanVariance => {
                let d = z - T::one();
                ExtReal::Finite(d * d * lit(0.5))
            }
            Kind::Avar { .. } => ExtReal::Finite(T::zero()),
            Kind::Custom { conj, .. } => conj(z),
        }
    }

    /// The subdifferential `[l'_-(s), l'_+(s)]`, which is also the set of
    /// maximizers of `z ↦ z s - l*(z)` over the conjugate domain.
    pub fn subdifferential(&self, s: T) -> (T, T) {
        match &self.kind {
            Kind::Entropic => {
                let d = s.exp();
                (d, d)
            }
            Kind::MonotoneMeanVariance => {
                let d = (s + T::one()).max(T::zero());
                (d, d)
            }
            Kind::Avar { gamma } => {
                let top = T::one() / *gamma;
                if s > T::zero() {
                    (top, top)
                } else if s < T::zero() {
                    (T::zero(), T::zero())
                } else {
                    (T::zero(), top)
                }
            }
            Kind::Custom { .. } => {
                let z = self.conj_argmax_numeric(s);
                (z, z)
            }
        }
    }

    fn conj_argmax_numeric(&self, s: T) -> T {
        let objective = |z: T| match self.conj(z) {
            ExtReal::Finite(c) => z * s - c,
            ExtReal::PosInf => T::neg_infinity(),
        };
        let lo = self.domain.lo;
        let hi = match self.domain.hi {
            Some(hi) => hi,
            None => {
                // grow until the concave objective turns down
                let mut hi = lo + T::one();
                let mut prev = objective(lo);
                for _ in 0..60 {
                    let cur = objective(hi);
                    if !(cur > prev) {
                        break;
                    }
                    prev = cur;
                    hi = lo + (hi - lo) * lit(2.0);
                }
                hi
            }
        };
        golden_max(objective, lo, hi, lit(1e-12)).0
    }
}

/// Brute-force Fenchel transform `sup_x (xz - l(x))` on an `n_pts` grid over
/// `x_box`.
///
/// When the grid maximum sits on a box edge with the objective still rising
/// there, the search continues outward along geometrically spaced probes. A
/// supremum that keeps growing is reported as `+∞`; one that levels off or
/// turns down is resolved to its limit or interior maximum.
pub fn conjugate_numeric<T: Scalar>(spec: &LossSpec<T>, z: T, x_box: (T, T), n_pts: usize) -> ExtReal<T> {
    assert!(n_pts >= 2, "conjugate_numeric needs at least two points");
    let (lo, hi) = x_box;
    assert!(lo.is_finite() && hi.is_finite() && lo < hi, "conjugate_numeric needs a finite box");
    let g = |x: T| x * z - spec.loss(x);
    let last = n_pts - 1;
    let node = |i: usize| {
        if i == last {
            hi
        } else {
            lo + (hi - lo) * (lit::<T>(i as f64) / lit(last as f64))
        }
    };
    let mut best = T::neg_infinity();
    let mut best_i = 0;
    for i in 0..n_pts {
        let v = g(node(i));
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let width = hi - lo;
    if best_i == 0 && g(node(0)) > g(node(1)) {
        outward(&g, lo, -width, best)
    } else if best_i == last && g(node(last)) > g(node(last - 1)) {
        outward(&g, hi, width, best)
    } else {
        ExtReal::Finite(best)
    }
}

fn outward<T: Scalar>(g: &impl Fn(T) -> T, edge: T, width: T, edge_value: T) -> ExtReal<T> {
    let converged = |inc: T, level: T| inc <= lit::<T>(1e-13) * (T::one() + level.abs());
    let mut prev_x = edge;
    let mut prev = edge_value;
    let mut scale = T::one();
    for _ in 0..48 {
        let x = edge + width * scale;
        let v = g(x);
        if v.is_nan() || v == T::infinity() {
            return ExtReal::PosInf;
        }
        if v <= prev {
            // peak bracketed between the previous two probes
            let back = prev_x - (x - prev_x);
            let (a, b) = if back < x { (back, x) } else { (x, back) };
            let (_, peak) = golden_max(g, a, b, lit(1e-12));
            return ExtReal::Finite(peak.max(prev));
        }
        if converged(v - prev, v) {
            return ExtReal::Finite(v);
        }
        prev_x = x;
        prev = v;
        scale = scale * lit(2.0);
    }
    ExtReal::PosInf
}

/// Outcome of one assumption clause.
#[derive(Debug, Clone, Serialize)]
pub struct Clause {
    pub name: &'static str,
    pub passed: bool,
    /// Worst offending value (0 when the clause holds).
    pub worst: f64,
    pub at: Option<f64>,
}

/// Per-clause results of [`check_assumptions`].
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub loss: String,
    pub clauses: Vec<Clause>,
    pub fenchel_young_violations: usize,
    pub fenchel_young_worst: f64,
    /// `max |l*(z) - conjugate_numeric(z)|` over the z-grid; `+∞` when one side
    /// is infinite and the other is not.
    pub conj_max_deviation: f64,
    pub conj_deviation_at: Option<f64>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed) && self.fenchel_young_violations == 0
    }

    pub fn clause(&self, name: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.name == name)
    }
}

/// Grid resolution of the numerical conjugate inside [`check_assumptions`].
pub const CONJ_CHECK_POINTS: usize = 100_001;

/// Checks the standing assumptions on a loss numerically: normalization
/// `l(0) = 0, l*(1) = 0`, monotonicity, convexity, a finite lower bound
/// (`l*(0) < ∞`), `l(x) > x` in each tail, convexity of the conjugate, and
/// Fenchel–Young on all grid pairs. Also reports the deviation of the
/// analytic conjugate from [`conjugate_numeric`] on `z_grid`, with the
/// numerical transform taken over the span of `x_grid`.
pub fn check_assumptions<T: Scalar>(spec: &LossSpec<T>, x_grid: &[T], z_grid: &[T], tol: T) -> AssumptionReport {
    assert!(x_grid.len() >= 3 && !z_grid.is_empty(), "grids must be nonempty");
    let mut xs = x_grid.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    let l: Vec<T> = xs.iter().map(|&x| spec.loss(x)).collect();
    let mut clauses = Vec::new();

    let l0 = spec.loss(T::zero()).abs();
    clauses.push(Clause { name: "l(0)=0", passed: l0 <= tol, worst: to_f64(l0), at: Some(0.0) });
    let c1 = spec.conj(T::one());
    let c1v = c1.finite().map_or(f64::INFINITY, |v| to_f64(v.abs()));
    clauses.push(Clause { name: "l*(1)=0", passed: c1v <= to_f64(tol), worst: c1v, at: Some(1.0) });

    let mut worst_drop = T::zero();
    let mut drop_at = None;
    for i in 1..xs.len() {
        let d = l[i - 1] - l[i];
        if d > worst_drop {
            worst_drop = d;
            drop_at = Some(to_f64(xs[i]));
        }
    }
    clauses.push(Clause {
        name: "nondecreasing",
        passed: worst_drop <= tol,
        worst: to_f64(worst_drop),
        at: drop_at,
    });

    let (worst_conv, conv_at) = worst_concavity(&xs, &l);
    clauses.push(Clause {
        name: "convex",
        passed: worst_conv <= tol,
        worst: to_f64(worst_conv),
        at: conv_at,
    });

    let c0 = spec.conj(T::zero());
    clauses.push(Clause {
        name: "bounded_below",
        passed: c0.is_finite(),
        worst: if c0.is_finite() { 0.0 } else { f64::INFINITY },
        at: None,
    });

    let tail = (xs.len() / 20).max(1);
    let tail_check = |idx: &mut dyn Iterator<Item = usize>| {
        let mut worst = T::zero();
        let mut at = None;
        for i in idx {
            let gap = xs[i] - l[i];
            if gap >= worst {
                worst = gap;
                at = Some(to_f64(xs[i]));
            }
        }
        (worst, at)
    };
    let (lw, lat) = tail_check(&mut (0..tail));
    clauses.push(Clause { name: "l(x)>x left tail", passed: lw <= T::zero() && lat.is_none(), worst: to_f64(lw), at: lat });
    let (rw, rat) = tail_check(&mut (xs.len() - tail..xs.len()));
    clauses.push(Clause { name: "l(x)>x right tail", passed: rw <= T::zero() && rat.is_none(), worst: to_f64(rw), at: rat });

    let mut zs = z_grid.to_vec();
    zs.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    let finite: Vec<(T, T)> = zs.iter().filter_map(|&z| spec.conj(z).finite().map(|c| (z, c))).collect();
    let (zx, zc): (Vec<T>, Vec<T>) = finite.iter().copied().unzip();
    let (worst_cc, cc_at) = if zx.len() >= 3 { worst_concavity(&zx, &zc) } else { (T::zero(), None) };
    clauses.push(Clause { name: "conjugate convex", passed: worst_cc <= tol, worst: to_f64(worst_cc), at: cc_at });

    let mut fy_violations = 0;
    let mut fy_worst = T::zero();
    for &(z, c) in &finite {
        for (&x, &lx) in xs.iter().zip(&l) {
            let excess = x * z - lx - c;
            if excess > tol * (T::one() + x.abs() + z.abs()) {
                fy_violations += 1;
            }
            fy_worst = fy_worst.max(excess);
        }
    }

    let x_box = (xs[0], xs[xs.len() - 1]);
    let mut dev = 0.0_f64;
    let mut dev_at = None;
    for &z in &zs {
        let d = match (spec.conj(z), conjugate_numeric(spec, z, x_box, CONJ_CHECK_POINTS)) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => to_f64((a - b).abs()),
            (ExtReal::PosInf, ExtReal::PosInf) => 0.0,
            _ => f64::INFINITY,
        };
        if d > dev {
            dev = d;
            dev_at = Some(to_f64(z));
        }
    }

    AssumptionReport {
        loss: spec.name().to_string(),
        clauses,
        fenchel_young_violations: fy_violations,
        fenchel_young_worst: to_f64(fy_worst),
        conj_max_deviation: dev,
        conj_deviation_at: dev_at,
    }
}

/// Largest drop in consecutive slopes (positive means a local concavity).
fn worst_concavity<T: Scalar>(xs: &[T], ys: &[T]) -> (T, Option<f64>) {
    let mut worst = T::zero();
    let mut at = None;
    for i in 1..xs.len() - 1 {
        let s0 = (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]);
        let s1 = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
        // scale by the local spacing so the measure matches a second difference
        let h = (xs[i + 1] - xs[i - 1]) * lit(0.5);
        let d = (s0 - s1) * h;
        if d > worst {
            worst = d;
            at = Some(to_f64(xs[i]));
        }
    }
    (worst, at)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn presets_by_name() {
        assert_eq!(preset::<f64>("entropic", &[]).unwrap().name(), "entropic");
        assert_eq!(preset::<f64>("mmv", &[]).unwrap().name(), "mmv");
        assert!(matches!(preset::<f64>("cvar", &[]), Err(Error::UnknownLoss(_))));
        assert!(preset::<f64>("avar", &[]).is_err());
        assert!(preset::<f64>("avar", &[1.0]).is_err());
        assert!(preset::<f64>("avar", &[0.0]).is_err());
        let avar = preset("avar", &[0.5_f64]).unwrap();
        assert_eq!(avar.conj_domain(), ConjDomain { lo: 0.0, hi: Some(2.0) });
    }

    #[test]
    fn avar_conjugate_is_indicator() {
        let avar = LossSpec::avar(0.5_f64).unwrap();
        assert_eq!(avar.conj(1.5), ExtReal::Finite(0.0));
        assert_eq!(avar.conj(2.5), ExtReal::PosInf);
        assert_eq!(avar.conj(-0.1), ExtReal::PosInf);
    }

    #[test]
    fn normalization() {
        for spec in [LossSpec::<f64>::entropic(), LossSpec::monotone_mean_variance(), LossSpec::avar(0.3).unwrap()] {
            assert_eq!(spec.loss(0.0), 0.0);
            assert_eq!(spec.conj(1.0), ExtReal::Finite(0.0));
        }
    }

    #[test]
    fn mmv_conjugate_at_three() {
        let mmv = LossSpec::<f64>::monotone_mean_variance();
        assert_eq!(mmv.conj(3.0), ExtReal::Finite(2.0));
        let numeric = conjugate_numeric(&mmv, 3.0, (-10.0, 10.0), 100_001).finite().unwrap();
        assert!((numeric - 2.0).abs() < 1e-8, "{numeric}");
    }

    #[test]
    fn numeric_conjugate_examples() {
        let ent = LossSpec::<f64>::entropic();
        let at_one = conjugate_numeric(&ent, 1.0, (-10.0, 10.0), 100_001).finite().unwrap();
        assert!(at_one.abs() < 1e-6);
        // l*(0) = 1 is only approached as x → -∞
        let at_zero = conjugate_numeric(&ent, 0.0, (-10.0, 10.0), 1001).finite().unwrap();
        assert!((at_zero - 1.0).abs() < 1e-12, "{at_zero}");
        let avar = LossSpec::avar(0.5_f64).unwrap();
        assert_eq!(conjugate_numeric(&avar, 3.0, (-10.0, 10.0), 1001), ExtReal::PosInf);
        assert_eq!(conjugate_numeric(&avar, 2.0, (-10.0, 10.0), 1001), ExtReal::Finite(0.0));
        let linear = LossSpec::custom("linear", true, ConjDomain { lo: 1.0, hi: Some(1.0) }, |x| x, |_| ExtReal::Finite(0.0));
        assert_eq!(conjugate_numeric(&linear, 0.0, (-10.0, 10.0), 101), ExtReal::PosInf);
    }

    #[test]
    fn entropic_conjugate_at_two() {
        // oracle first at two resolutions, then against z ln z - z + 1
        let ent = LossSpec::<f64>::entropic();
        let coarse = conjugate_numeric(&ent, 2.0, (-10.0, 10.0), 20_001).finite().unwrap();
        let fine = conjugate_numeric(&ent, 2.0, (-10.0, 10.0), 400_001).finite().unwrap();
        assert!((coarse - fine).abs() < 1e-6);
        assert!((fine - 0.386_294_361_119_890_6).abs() < 1e-8);
        assert!((ent.conj(2.0).finite().unwrap() - fine).abs() < 1e-8);
    }

    #[test]
    fn presets_pass_assumptions() {
        let xs = linspace(-10.0, 10.0, 2001);
        let cases: Vec<(LossSpec<f64>, Vec<f64>)> = vec![
            (LossSpec::entropic(), linspace(0.0, 8.0, 100)),
            (LossSpec::monotone_mean_variance(), linspace(0.0, 8.0, 100)),
            (LossSpec::avar(0.5).unwrap(), linspace(0.0, 2.0, 100)),
        ];
        for (spec, zs) in cases {
            let report = check_assumptions(&spec, &xs, &zs, 1e-9);
            assert!(report.passed(), "{report:#?}");
            assert!(report.conj_max_deviation < 1e-6, "{}: {}", spec.name(), report.conj_max_deviation);
        }
        let avar = LossSpec::avar(0.5_f64).unwrap();
        let report = check_assumptions(&avar, &xs, &linspace(0.0, 2.0, 100), 1e-9);
        assert_eq!(report.conj_max_deviation, 0.0);
    }

    #[test]
    fn linear_loss_fails_tails() {
        let linear = LossSpec::custom(
            "linear",
            true,
            ConjDomain { lo: 1.0, hi: Some(1.0) },
            |x: f64| x,
            |z| if z == 1.0 { ExtReal::Finite(0.0) } else { ExtReal::PosInf },
        );
        let report = check_assumptions(&linear, &linspace(-10.0, 10.0, 201), &[1.0], 1e-9);
        assert!(!report.passed());
        assert!(!report.clause("l(x)>x left tail").unwrap().passed);
        assert!(!report.clause("l(x)>x right tail").unwrap().passed);
        assert!(!report.clause("bounded_below").unwrap().passed);
    }

    #[test]
    fn subdifferential_matches_conjugate_argmax() {
        let avar = LossSpec::avar(0.25_f64).unwrap();
        assert_eq!(avar.subdifferential(0.0), (0.0, 4.0));
        assert_eq!(avar.subdifferential(1.0), (4.0, 4.0));
        let ent = LossSpec::<f64>::entropic();
        let custom = LossSpec::custom(
            "entropic-custom",
            true,
            ConjDomain { lo: 0.0, hi: None },
            |x: f64| x.exp_m1(),
            |z| LossSpec::<f64>::entropic().conj(z),
        );
        for s in [-2.0, -0.3, 0.0, 0.7, 1.5] {
            let (a, _) = custom.subdifferential(s);
            assert!((a - ent.subdifferential(s).0).abs() < 1e-6, "s={s}: {a}");
        }
    }
}
