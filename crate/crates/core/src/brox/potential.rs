use crate::environment::Environment;
use crate::error::{Result, SimError};

/// 2K₁-periodic tent map, h(x) = |x| on [−K₁, K₁].
pub fn tent(x: f64, k1: f64) -> f64 {
    let p = 2.0 * k1;
    let r = x.rem_euclid(p);
    if r > k1 {
        p - r
    } else {
        r
    }
}

/// Site increment log((½ − ξ/4√n)/(½ + ξ/4√n)).
pub fn site_increment(xi: f64, n: usize) -> f64 {
    let a = xi / (4.0 * (n as f64).sqrt());
    ((0.5 - a) / (0.5 + a)).ln()
}

/// Piecewise-constant potential on integer sites and its reflected, periodized
/// version, with the scale function A(x) = ∫₀ˣ e^{V̂(y)} dy in closed form.
///
/// Positions are measured in sites; the diffusion lives at z = x/n.
#[derive(Clone, Debug)]
pub struct PotentialProfile {
    n: usize,
    k1: usize,
    /// V on [i, i+1), i = 0..nK₁.
    v: Vec<f64>,
    /// V̂ on [j, j+1), j = 0..2nK₁.
    v_hat: Vec<f64>,
    /// A(j) for j = 0..=2nK₁.
    scale: Vec<f64>,
}

impl PotentialProfile {
    /// `xi[i]` is the site variable at site i for i < nK₁. Site 0 only enters
    /// the bound check, since V vanishes on [0, 1).
    pub fn build(xi: &[f64], n: usize, k1: usize, bound: f64) -> Result<Self> {
        if n == 0 || k1 == 0 {
            return Err(SimError::Config("potential needs n ≥ 1 and K₁ ≥ 1".into()));
        }
        let sites = n * k1;
        if xi.len() < sites {
            return Err(SimError::Precondition(format!("need {sites} site values, got {}", xi.len())));
        }
        let hard = 2.0 * (n as f64).sqrt();
        for (i, &x) in xi[..sites].iter().enumerate() {
            if !(x.abs() <= bound * (1.0 + 1e-12)) || x.abs() >= hard {
                return Err(SimError::Domain(format!("|ξ({i})| = {} exceeds bound {bound}", x.abs())));
            }
        }
        let mut v = Vec::with_capacity(sites);
        v.push(0.0);
        for i in 1..sites {
            v.push(v[i - 1] + site_increment(xi[i], n));
        }
        Self::from_segments(n, k1, v)
    }

    /// Arbitrary segment values V on [i, i+1), i = 0..nK₁.
    pub fn from_segments(n: usize, k1: usize, v: Vec<f64>) -> Result<Self> {
        let sites = n * k1;
        if n == 0 || k1 == 0 || v.len() != sites {
            return Err(SimError::Config(format!("expected {sites} segment values, got {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(SimError::Domain("non-finite potential".into()));
        }
        let period = 2 * sites;
        let v_hat: Vec<f64> = (0..period)
            .map(|j| {
                let mid = j as f64 + 0.5;
                let folded = tent(mid, sites as f64);
                v[(folded.floor() as usize).min(sites - 1)]
            })
            .collect();
        let mut scale = Vec::with_capacity(period + 1);
        scale.push(0.0);
        for j in 0..period {
            scale.push(scale[j] + v_hat[j].exp());
        }
        Ok(PotentialProfile { n, k1, v, v_hat, scale })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k1(&self) -> usize {
        self.k1
    }

    /// Period of V̂ in sites, 2nK₁.
    pub fn period(&self) -> usize {
        self.v_hat.len()
    }

    /// V(x) for x ∈ [0, nK₁), in sites.
    pub fn v(&self, x: f64) -> f64 {
        let i = (x.max(0.0).floor() as usize).min(self.v.len() - 1);
        self.v[i]
    }

    /// V̂ on the segment [j, j+1).
    pub fn v_hat_segment(&self, j: i64) -> f64 {
        self.v_hat[j.rem_euclid(self.period() as i64) as usize]
    }

    /// V̂(x), in sites.
    pub fn v_hat(&self, x: f64) -> f64 {
        self.v_hat_segment(x.floor() as i64)
    }

    /// A(x), in sites.
    pub fn scale_sites(&self, x: f64) -> f64 {
        let p = self.period() as f64;
        let q = (x / p).floor();
        let r = x - q * p;
        let j = (r.floor() as usize).min(self.period() - 1);
        q * self.scale[self.period()] + self.scale[j] + (r - j as f64) * self.v_hat[j].exp()
    }

    /// A at an integer site, without rounding through the fractional part.
    pub fn scale_at_site(&self, j: i64) -> f64 {
        let p = self.period() as i64;
        let q = j.div_euclid(p);
        let r = j.rem_euclid(p) as usize;
        q as f64 * self.scale[self.period()] + self.scale[r]
    }

    /// A⁻¹(w), in sites. Exact on each segment after locating it by bisection.
    pub fn scale_inv_sites(&self, w: f64) -> f64 {
        let total = self.scale[self.period()];
        let q = (w / total).floor();
        let r = w - q * total;
        let j = self.scale.partition_point(|&a| a <= r).saturating_sub(1).min(self.period() - 1);
        q * self.period() as f64 + j as f64 + (r - self.scale[j]) * (-self.v_hat[j]).exp()
    }

    /// Aⁿ(z) = A(nz)/n, so that Aⁿ(z) = z when V ≡ 0.
    pub fn scale(&self, z: f64) -> f64 {
        self.scale_sites(z * self.n as f64) / self.n as f64
    }

    pub fn scale_inv(&self, w: f64) -> f64 {
        self.scale_inv_sites(w * self.n as f64) / self.n as f64
    }

    /// V̂ at diffusion coordinate z.
    pub fn v_hat_at(&self, z: f64) -> f64 {
        self.v_hat(z * self.n as f64)
    }

    /// Probability that the walk on sites steps from j to j+1, read off the
    /// scale function: e^{V̂_{j−1}}/(e^{V̂_{j−1}} + e^{V̂_j}).
    pub fn up_probability(&self, j: i64) -> f64 {
        let d = self.v_hat_segment(j) - self.v_hat_segment(j - 1);
        1.0 / (1.0 + d.exp())
    }
}

/// Site values ξ(i) = ξ_i(x) read from a realized environment, i < `sites`.
/// Site 0 carries no variable and is set to 0.
pub fn site_values<E: Environment + ?Sized>(env: &E, sites: usize, x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(sites);
    out.push(0.0);
    for i in 1..sites {
        out.push(env.xi(i, x));
    }
    out
}
