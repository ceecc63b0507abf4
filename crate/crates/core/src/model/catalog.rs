//! Built-in test models and the GI/M/1-type block family.

use std::collections::HashMap;

use crate::matrix::DenseMatrix;
use crate::model::{Band, BlockGenerator, LevelSizes, ModelError};

fn get_param(params: &HashMap<String, f64>, name: &str) -> Result<f64, ModelError> {
    params
        .get(name)
        .copied()
        .ok_or_else(|| ModelError::MissingParam(name.to_string()))
}

fn require_positive(name: &str, v: f64) -> Result<(), ModelError> {
    if !v.is_finite() || v <= 0.0 {
        return Err(ModelError::UnstableParams(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// Constructs a catalog model by name.
///
/// Names: `mm1(lambda, mu)`, `level_dep_qbd(lambda, mu, c)`,
/// `mg1_type(lambda, mu, r)`, `gim1_type(lambda, mu, r)`,
/// `catastrophe_qbd(lambda, mu, gamma)`.
pub fn builtin(name: &str, params: &[(&str, f64)]) -> Result<BlockGenerator, ModelError> {
    let map: HashMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    builtin_map(name, &map)
}

pub fn builtin_map(name: &str, params: &HashMap<String, f64>) -> Result<BlockGenerator, ModelError> {
    match name {
        "mm1" => mm1(params),
        "level_dep_qbd" => level_dep_qbd(params),
        "mg1_type" => mg1_type(params),
        "gim1_type" => Ok(builtin_gim1_map(params)?.to_generator()),
        "catastrophe_qbd" => catastrophe_qbd(params),
        other => Err(ModelError::UnknownModel(other.to_string())),
    }
}

/// The GI/M/1-type catalog entry as its block family, for the solver that
/// consumes the repeating blocks directly.
pub fn builtin_gim1(params: &[(&str, f64)]) -> Result<Gim1Blocks, ModelError> {
    let map: HashMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    builtin_gim1_map(&map)
}

fn mm1(params: &HashMap<String, f64>) -> Result<BlockGenerator, ModelError> {
    let lambda = get_param(params, "lambda")?;
    let mu = get_param(params, "mu")?;
    require_positive("lambda", lambda)?;
    require_positive("mu", mu)?;
    if lambda >= mu {
        return Err(ModelError::UnstableParams(format!(
            "mm1 needs lambda < mu for ergodicity (lambda={lambda}, mu={mu})"
        )));
    }
    Ok(BlockGenerator::from_fn(
        format!("mm1(lambda={lambda}, mu={mu})"),
        LevelSizes::constant(1),
        Band::Finite(1),
        Band::Finite(1),
        move |k, l| {
            if l == k + 1 {
                Some(DenseMatrix::scalar(lambda))
            } else if k == l {
                Some(DenseMatrix::scalar(if k == 0 { -lambda } else { -lambda - mu }))
            } else if l + 1 == k {
                Some(DenseMatrix::scalar(mu))
            } else {
                None
            }
        },
        birth_death_support,
    ))
}

fn birth_death_support(k: usize) -> Vec<usize> {
    if k == 0 {
        vec![0, 1]
    } else {
        vec![k - 1, k, k + 1]
    }
}

fn level_dep_qbd(params: &HashMap<String, f64>) -> Result<BlockGenerator, ModelError> {
    let lambda = get_param(params, "lambda")?;
    let mu = get_param(params, "mu")?;
    let c_raw = get_param(params, "c")?;
    require_positive("lambda", lambda)?;
    require_positive("mu", mu)?;
    let c = c_raw.round() as usize;
    if c == 0 || (c_raw - c as f64).abs() > 1e-9 {
        return Err(ModelError::UnstableParams(format!("c must be a positive integer, got {c_raw}")));
    }
    if lambda >= c as f64 * mu {
        return Err(ModelError::UnstableParams(format!(
            "level_dep_qbd needs lambda < c*mu for ergodicity (lambda={lambda}, c*mu={})",
            c as f64 * mu
        )));
    }
    Ok(BlockGenerator::from_fn(
        format!("level_dep_qbd(lambda={lambda}, mu={mu}, c={c})"),
        LevelSizes::constant(1),
        Band::Finite(1),
        Band::Finite(1),
        move |k, l| {
            let service = |k: usize| k.min(c) as f64 * mu;
            if l == k + 1 {
                Some(DenseMatrix::scalar(lambda))
            } else if k == l {
                Some(DenseMatrix::scalar(-lambda - service(k)))
            } else if l + 1 == k {
                Some(DenseMatrix::scalar(service(k)))
            } else {
                None
            }
        },
        birth_death_support,
    ))
}

/// Upper block-Hessenberg model with two phases and upward batch jumps of size
/// 1..=3 carrying geometrically decaying rates with ratio `r`.
fn mg1_type(params: &HashMap<String, f64>) -> Result<BlockGenerator, ModelError> {
    const JUMP_MAX: usize = 3;
    let lambda = get_param(params, "lambda")?;
    let mu = get_param(params, "mu")?;
    let r = get_param(params, "r")?;
    require_positive("lambda", lambda)?;
    require_positive("mu", mu)?;
    if !r.is_finite() || r <= 0.0 || r >= 1.0 {
        return Err(ModelError::UnstableParams(format!("r must lie in (0,1), got {r}")));
    }
    // geometric weights over jump sizes, normalized to total rate lambda
    let mut weights = [0.0; JUMP_MAX];
    let norm: f64 = (0..JUMP_MAX).map(|j| r.powi(j as i32)).sum();
    for (j, w) in weights.iter_mut().enumerate() {
        *w = lambda * r.powi(j as i32) / norm;
    }
    let mean_jump: f64 = weights.iter().enumerate().map(|(j, w)| (j + 1) as f64 * w).sum::<f64>() / lambda;
    if lambda * mean_jump >= mu {
        return Err(ModelError::UnstableParams(format!(
            "mg1_type needs lambda*mean_jump < mu (drift {} vs {mu})",
            lambda * mean_jump
        )));
    }
    let sigma = 0.5;
    let up = DenseMatrix::from_rows(&[&[0.7, 0.3], &[0.4, 0.6]]);
    let down = DenseMatrix::from_rows(&[&[0.6, 0.4], &[0.1, 0.9]]);
    Ok(BlockGenerator::from_fn(
        format!("mg1_type(lambda={lambda}, mu={mu}, r={r})"),
        LevelSizes::constant(2),
        Band::Finite(1),
        Band::Finite(JUMP_MAX),
        move |k, l| {
            if l > k && l - k <= JUMP_MAX {
                Some(up.scale(weights[l - k - 1]))
            } else if k == l {
                let out = lambda + if k > 0 { mu } else { 0.0 };
                Some(DenseMatrix::from_rows(&[
                    &[-sigma - out, sigma],
                    &[sigma, -sigma - out],
                ]))
            } else if l + 1 == k {
                Some(down.scale(mu))
            } else {
                None
            }
        },
        |k| {
            let lo = k.saturating_sub(1);
            (lo..=k + JUMP_MAX).collect()
        },
    ))
}

/// Lower block-Hessenberg model where every level can crash to level 0 and the
/// service rate depends on the level (multi-server style, capped at 3 busy
/// servers). The crash band makes the sub-diagonal support dense.
fn catastrophe_qbd(params: &HashMap<String, f64>) -> Result<BlockGenerator, ModelError> {
    let lambda = get_param(params, "lambda")?;
    let mu = get_param(params, "mu")?;
    let gamma = get_param(params, "gamma")?;
    require_positive("lambda", lambda)?;
    require_positive("mu", mu)?;
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(ModelError::UnstableParams(format!("gamma must be nonnegative, got {gamma}")));
    }
    if gamma == 0.0 && lambda >= 3.0 * mu {
        return Err(ModelError::UnstableParams(
            "catastrophe_qbd with gamma=0 needs lambda < 3*mu for ergodicity".into(),
        ));
    }
    let sigma = 0.4;
    let down = DenseMatrix::from_rows(&[&[0.7, 0.3], &[0.2, 0.8]]);
    let service = move |k: usize| k.min(3) as f64 * mu;
    Ok(BlockGenerator::from_fn(
        format!("catastrophe_qbd(lambda={lambda}, mu={mu}, gamma={gamma})"),
        LevelSizes::new(vec![1], 2),
        Band::Dense,
        Band::Finite(1),
        move |k, l| match (k, l) {
            (0, 0) => Some(DenseMatrix::scalar(-lambda)),
            (0, 1) => Some(DenseMatrix::from_rows(&[&[0.6 * lambda, 0.4 * lambda]])),
            (1, 0) => Some(DenseMatrix::from_rows(&[&[service(1) + gamma], &[service(1) + gamma]])),
            (k, 0) if k >= 2 => {
                if gamma > 0.0 {
                    Some(DenseMatrix::from_rows(&[&[gamma], &[gamma]]))
                } else {
                    None
                }
            }
            (k, l) if k >= 2 && l + 1 == k => Some(down.scale(service(k))),
            (k, l) if k >= 1 && k == l => {
                let out = lambda + service(k) + gamma;
                Some(DenseMatrix::from_rows(&[
                    &[-sigma - out, sigma],
                    &[sigma, -sigma - out],
                ]))
            }
            (k, l) if k >= 1 && l == k + 1 => {
                Some(DenseMatrix::from_rows(&[&[lambda, 0.0], &[0.0, lambda]]))
            }
            _ => None,
        },
        move |k| match k {
            0 => vec![0, 1],
            1 => vec![0, 1, 2],
            k => {
                if gamma > 0.0 {
                    vec![0, k - 1, k, k + 1]
                } else {
                    vec![k - 1, k, k + 1]
                }
            }
        },
    ))
}

/// Repeating blocks of a GI/M/1-type generator: interior rows share the
/// one-step-up block, the local block, and a family of downward blocks; the
/// boundary row and boundary column have their own blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Gim1Blocks {
    /// A₁: interior one-level-up block (m x m).
    a_up: DenseMatrix,
    /// A₀: interior local block (m x m).
    a_local: DenseMatrix,
    /// A₋ⱼ for j = 1.., interior downward blocks (m x m).
    a_down: Vec<DenseMatrix>,
    /// B₁: boundary one-level-up block (m₀ x m).
    b_up: DenseMatrix,
    /// B₀: boundary local block (m₀ x m₀).
    b_local: DenseMatrix,
    /// B₋ₖ for k = 1.., drops from level k to the boundary (m x m₀).
    b_down: Vec<DenseMatrix>,
}

impl Gim1Blocks {
    pub fn new(
        a_up: DenseMatrix,
        a_local: DenseMatrix,
        a_down: Vec<DenseMatrix>,
        b_up: DenseMatrix,
        b_local: DenseMatrix,
        b_down: Vec<DenseMatrix>,
    ) -> Self {
        Gim1Blocks { a_up, a_local, a_down, b_up, b_local, b_down }
    }

    pub fn interior_size(&self) -> usize {
        self.a_local.rows()
    }

    pub fn boundary_size(&self) -> usize {
        self.b_local.rows()
    }

    /// Interior block A_i for i <= 1; `None` when structurally zero.
    pub fn a(&self, i: isize) -> Option<&DenseMatrix> {
        match i {
            1 => Some(&self.a_up),
            0 => Some(&self.a_local),
            _ if i < 0 => self.a_down.get((-i - 1) as usize),
            _ => None,
        }
    }

    /// Boundary block B_i for i <= 1; `None` when structurally zero.
    pub fn b(&self, i: isize) -> Option<&DenseMatrix> {
        match i {
            1 => Some(&self.b_up),
            0 => Some(&self.b_local),
            _ if i < 0 => self.b_down.get((-i - 1) as usize),
            _ => None,
        }
    }

    pub fn down_depth(&self) -> usize {
        self.a_down.len().max(self.b_down.len())
    }

    /// The induced level-partitioned generator: Q_{k,l} = A_{l-k} in the
    /// interior and B_{l-k} on the boundary row/column.
    pub fn to_generator(&self) -> BlockGenerator {
        let blocks = self.clone();
        let depth = self.down_depth();
        let support = move |k: usize| -> Vec<usize> {
            if k == 0 {
                return vec![0, 1];
            }
            let mut s: Vec<usize> = Vec::new();
            if k <= depth {
                s.push(0);
            }
            let lo = k.saturating_sub(depth).max(1);
            s.extend(lo..=k + 1);
            s
        };
        BlockGenerator::from_fn(
            "gim1_induced",
            LevelSizes::new(vec![self.boundary_size()], self.interior_size()),
            Band::Finite(depth),
            Band::Finite(1),
            move |k, l| {
                if l > k + 1 {
                    return None;
                }
                let off = l as isize - k as isize;
                if k == 0 || l == 0 {
                    blocks.b(off).cloned()
                } else {
                    blocks.a(off).cloned()
                }
            },
            support,
        )
    }

    /// Extracts the repeating blocks from a generator whose interior is
    /// level-shift invariant. Probes a finite depth and verifies consistency.
    pub fn from_generator(model: &BlockGenerator, probe: usize) -> Result<Gim1Blocks, ModelError> {
        let probe = probe.max(4);
        let m = model.level_size(1);
        for k in 1..=probe {
            if model.level_size(k) != m {
                return Err(ModelError::InvalidFile(format!(
                    "interior level sizes differ at level {k}; not GI/M/1-type"
                )));
            }
            for l in model.row_support(k) {
                if l > k + 1 {
                    return Err(ModelError::InvalidFile(format!(
                        "block ({k},{l}) above the first superdiagonal; not lower block-Hessenberg"
                    )));
                }
            }
        }
        // deep interior row supplies the A family
        let anchor = probe;
        let a_up = model
            .block(anchor, anchor + 1)
            .ok_or_else(|| ModelError::InvalidFile("missing interior up block".into()))?;
        let a_local = model
            .block(anchor, anchor)
            .ok_or_else(|| ModelError::InvalidFile("missing interior local block".into()))?;
        let mut deepest_a = 0usize;
        for j in 1..anchor {
            if model.block(anchor, anchor - j).is_some() {
                deepest_a = j;
            }
        }
        let mut a_down = Vec::with_capacity(deepest_a);
        for j in 1..=deepest_a {
            a_down.push(
                model
                    .block(anchor, anchor - j)
                    .unwrap_or_else(|| DenseMatrix::zeros(m, m)),
            );
        }
        // verify shift invariance of the interior against the anchor row
        for k in 1..probe {
            for l in 1..=k + 1 {
                let expected = {
                    let off = l as isize - k as isize;
                    match off {
                        1 => Some(a_up.clone()),
                        0 => Some(a_local.clone()),
                        _ => a_down.get((-off - 1) as usize).cloned(),
                    }
                };
                let actual = model.block(k, l);
                match (expected, actual) {
                    (None, None) => {}
                    (Some(x), Some(y)) if x.max_abs_diff(&y) <= 1e-12 => {}
                    (None, Some(y)) if y.inf_norm() == 0.0 => {}
                    _ => {
                        return Err(ModelError::InvalidFile(format!(
                            "interior block ({k},{l}) breaks level-shift invariance; not GI/M/1-type"
                        )))
                    }
                }
            }
        }
        let b_up = model
            .block(0, 1)
            .ok_or_else(|| ModelError::InvalidFile("missing boundary up block".into()))?;
        let b_local = model
            .block(0, 0)
            .ok_or_else(|| ModelError::InvalidFile("missing boundary local block".into()))?;
        let mut b_down = Vec::new();
        let mut deepest = 0usize;
        for k in 1..=probe {
            if model.block(k, 0).is_some() {
                deepest = k;
            }
        }
        if deepest == probe {
            if let Some(b) = model.block(probe + 1, 0) {
                if b.inf_norm() > 0.0 {
                    return Err(ModelError::InvalidFile(format!(
                        "boundary column still nonzero at level {}; support too deep to extract",
                        probe + 1
                    )));
                }
            }
        }
        for k in 1..=deepest {
            let b = model
                .block(k, 0)
                .unwrap_or_else(|| DenseMatrix::zeros(m, model.level_size(0)));
            b_down.push(b);
        }
        Ok(Gim1Blocks { a_up, a_local, a_down, b_up, b_local, b_down })
    }
}

/// GI/M/1-type catalog entry: two phases, one-step-up arrivals, downward jumps
/// of depth 1..=3 with geometric rate decay `r`; undershooting jumps land on
/// the boundary level.
pub fn builtin_gim1_map(params: &HashMap<String, f64>) -> Result<Gim1Blocks, ModelError> {
    const DOWN_MAX: usize = 3;
    let lambda = get_param(params, "lambda")?;
    let mu = get_param(params, "mu")?;
    let r = get_param(params, "r")?;
    require_positive("lambda", lambda)?;
    require_positive("mu", mu)?;
    if !r.is_finite() || r <= 0.0 || r >= 1.0 {
        return Err(ModelError::UnstableParams(format!("r must lie in (0,1), got {r}")));
    }
    let norm: f64 = (0..DOWN_MAX).map(|j| r.powi(j as i32)).sum();
    let rates: Vec<f64> = (0..DOWN_MAX).map(|j| mu * r.powi(j as i32) / norm).collect();
    let mean_down: f64 = rates.iter().enumerate().map(|(j, d)| (j + 1) as f64 * d).sum();
    if lambda >= mean_down {
        return Err(ModelError::UnstableParams(format!(
            "gim1_type needs lambda < mean downward rate (lambda={lambda}, mean={mean_down})"
        )));
    }
    let sigma = 0.3;
    let up = DenseMatrix::from_rows(&[&[0.8, 0.2], &[0.3, 0.7]]);
    let dn = DenseMatrix::from_rows(&[&[0.5, 0.5], &[0.25, 0.75]]);
    let a_up = up.scale(lambda);
    let a_local = DenseMatrix::from_rows(&[
        &[-sigma - lambda - mu, sigma],
        &[sigma, -sigma - lambda - mu],
    ]);
    let a_down: Vec<DenseMatrix> = rates.iter().map(|d| dn.scale(*d)).collect();
    let b_up = a_up.clone();
    let b_local = DenseMatrix::from_rows(&[&[-sigma - lambda, sigma], &[sigma, -sigma - lambda]]);
    // a drop that would undershoot the boundary lands on it instead
    let b_down: Vec<DenseMatrix> = (1..=DOWN_MAX)
        .map(|k| {
            let mass: f64 = rates[k - 1..].iter().sum();
            dn.scale(mass)
        })
        .collect();
    Ok(Gim1Blocks::new(a_up, a_local, a_down, b_up, b_local, b_down))
}
