//! Named operators with conventional bases.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::bases::{binomial, form_basis, form_index, sym_dim, sym_index, sym_pairs, sym_weight};
use super::{MultiIndex, Operator};
use crate::error::{Error, Result};

pub type Params = BTreeMap<String, i64>;

/// Listing entry for a catalog operator.
#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub params: &'static str,
    pub default_n: usize,
    pub summary: &'static str,
}

pub const ENTRIES: &[CatalogEntry] = &[
    CatalogEntry {
        name: "grad",
        params: "n>=1",
        default_n: 2,
        summary: "gradient of a scalar, R -> R^n",
    },
    CatalogEntry {
        name: "dk_scalar",
        params: "n>=1, k>=1 (default 2)",
        default_n: 2,
        summary: "full k-th derivative tensor of a scalar, R -> R^(n^k)",
    },
    CatalogEntry {
        name: "laplacian",
        params: "n>=1",
        default_n: 2,
        summary: "scalar Laplacian, R -> R",
    },
    CatalogEntry {
        name: "sym_grad",
        params: "n>=1",
        default_n: 2,
        summary: "symmetric derivative, R^n -> Sym(n)",
    },
    CatalogEntry {
        name: "hodge",
        params: "n>=2, 1<=m<=n-1 (default 1)",
        default_n: 3,
        summary: "(d, d*) on m-forms, L^m -> L^(m+1) + L^(m-1)",
    },
    CatalogEntry {
        name: "divergence",
        params: "n>=1",
        default_n: 2,
        summary: "divergence, R^n -> R",
    },
    CatalogEntry {
        name: "curl3",
        params: "n=3",
        default_n: 3,
        summary: "curl in three dimensions, R^3 -> R^3",
    },
    CatalogEntry {
        name: "curl2",
        params: "n=2",
        default_n: 2,
        summary: "scalar rotation -d2 v1 + d1 v2, R^2 -> R",
    },
    CatalogEntry {
        name: "saint_venant",
        params: "n>=2",
        default_n: 2,
        summary: "Saint-Venant compatibility tensor, Sym(n) -> R^(n^4)",
    },
    CatalogEntry {
        name: "dbar_power",
        params: "n=2, j>=1 (default 1)",
        default_n: 2,
        summary: "j-th power of the Cauchy-Riemann operator on C = R^2",
    },
    CatalogEntry {
        name: "partial_slice",
        params: "n>=1",
        default_n: 2,
        summary: "gradient of the first component only, R^2 -> R^n",
    },
];

fn invalid(name: &str, message: impl Into<String>) -> Error {
    Error::InvalidParams {
        name: name.to_string(),
        message: message.into(),
    }
}

fn param(name: &str, params: &Params, key: &str, default: i64) -> Result<i64> {
    let v = params.get(key).copied().unwrap_or(default);
    if v < 0 {
        return Err(invalid(name, format!("{key} must be nonnegative")));
    }
    Ok(v)
}

fn check_keys(name: &str, params: &Params, allowed: &[&str]) -> Result<()> {
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(invalid(name, format!("unknown parameter `{key}`")));
        }
    }
    Ok(())
}

/// Looks up a catalog operator. `params` holds the extra parameters
/// (`k`, `m`, `j`); the dimension is passed separately.
pub fn get(name: &str, n: usize, params: &Params) -> Result<Operator> {
    if n == 0 {
        return Err(invalid(name, "n must be positive"));
    }
    let op = match name {
        "grad" => {
            check_keys(name, params, &[])?;
            dk_scalar(n, 1)?
        }
        "dk_scalar" => {
            check_keys(name, params, &["k"])?;
            let k = param(name, params, "k", 2)?;
            if k < 1 {
                return Err(invalid(name, "k must be at least 1"));
            }
            dk_scalar(n, k as usize)?
        }
        "laplacian" => {
            check_keys(name, params, &[])?;
            laplacian(n)?
        }
        "sym_grad" => {
            check_keys(name, params, &[])?;
            sym_grad(n)?
        }
        "hodge" => {
            check_keys(name, params, &["m"])?;
            let m = param(name, params, "m", 1)? as usize;
            if n < 2 || m < 1 || m > n - 1 {
                return Err(invalid(name, format!("need 1 <= m <= n-1 (n={n}, m={m})")));
            }
            hodge(n, m)?
        }
        "divergence" => {
            check_keys(name, params, &[])?;
            divergence(n)?
        }
        "curl3" => {
            check_keys(name, params, &[])?;
            if n != 3 {
                return Err(invalid(name, "curl3 requires n = 3"));
            }
            curl3()?
        }
        "curl2" => {
            check_keys(name, params, &[])?;
            if n != 2 {
                return Err(invalid(name, "curl2 requires n = 2"));
            }
            curl2()?
        }
        "saint_venant" => {
            check_keys(name, params, &[])?;
            if n < 2 {
                return Err(invalid(name, "saint_venant requires n >= 2"));
            }
            saint_venant(n)?
        }
        "dbar_power" => {
            check_keys(name, params, &["j"])?;
            if n != 2 {
                return Err(invalid(name, "dbar_power is only defined for n = 2"));
            }
            let j = param(name, params, "j", 1)?;
            if j < 1 {
                return Err(invalid(name, "j must be at least 1"));
            }
            dbar_power(j as u32)?
        }
        "partial_slice" => {
            check_keys(name, params, &[])?;
            partial_slice(n)?
        }
        _ => return Err(Error::UnknownOperator(name.to_string())),
    };
    Ok(op.with_name(descriptor(name, n, params)))
}

/// Canonical descriptor `name:n=..,key=..` (keys sorted).
pub fn descriptor(name: &str, n: usize, params: &Params) -> String {
    let mut s = format!("{name}:n={n}");
    for (k, v) in params {
        s.push_str(&format!(",{k}={v}"));
    }
    s
}

/// Parses `NAME[:key=value,...]`; `n` defaults to the entry's default.
pub fn parse_descriptor(spec: &str) -> Result<(String, usize, Params)> {
    let (name, rest) = match spec.split_once(':') {
        Some((a, b)) => (a, b),
        None => (spec, ""),
    };
    let entry = ENTRIES
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownOperator(name.to_string()))?;
    let mut n = entry.default_n;
    let mut params = Params::new();
    for kv in rest.split(',').filter(|s| !s.trim().is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| invalid(name, format!("expected key=value, got `{kv}`")))?;
        let v: i64 = v
            .trim()
            .parse()
            .map_err(|_| invalid(name, format!("`{v}` is not an integer")))?;
        if k.trim() == "n" {
            if v < 1 {
                return Err(invalid(name, "n must be positive"));
            }
            n = v as usize;
        } else {
            params.insert(k.trim().to_string(), v);
        }
    }
    Ok((name.to_string(), n, params))
}

/// Parses and builds in one step.
pub fn from_descriptor(spec: &str) -> Result<Operator> {
    let (name, n, params) = parse_descriptor(spec)?;
    get(&name, n, &params)
}

fn unit_column(rows: usize, cols: usize, r: usize, c: usize, value: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    m[(r, c)] = value;
    m
}

/// `D^k` on scalars with values in the full tensor space `ℝ^{n^k}`; the
/// component `(i₁, …, i_k)` sits at `Σ i_j n^{k-j}`.
fn dk_scalar(n: usize, k: usize) -> Result<Operator> {
    let dim_e = n.pow(k as u32);
    let mut terms = Vec::with_capacity(dim_e);
    for flat in 0..dim_e {
        let mut axes = Vec::with_capacity(k);
        let mut rest = flat;
        for _ in 0..k {
            axes.push(rest % n);
            rest /= n;
        }
        axes.reverse();
        terms.push((
            MultiIndex::from_axes(n, &axes),
            unit_column(dim_e, 1, flat, 0, 1.0),
        ));
    }
    Operator::new(n, k, 1, dim_e, terms, None)
}

fn laplacian(n: usize) -> Result<Operator> {
    let terms = (0..n).map(|i| (MultiIndex::axis(n, i, 2), DMatrix::from_element(1, 1, 1.0)));
    Operator::new(n, 2, 1, 1, terms, None)
}

fn sym_grad(n: usize) -> Result<Operator> {
    let dim_e = sym_dim(n);
    let mut terms = Vec::new();
    for (i, j) in sym_pairs(n) {
        let row = sym_index(n, i, j);
        let w = sym_weight(i, j);
        if i == j {
            terms.push((
                MultiIndex::axis(n, i, 1),
                unit_column(dim_e, n, row, i, 1.0),
            ));
        } else {
            // (∂_i u_j + ∂_j u_i) / 2, scaled by √2
            terms.push((
                MultiIndex::axis(n, i, 1),
                unit_column(dim_e, n, row, j, w / 2.0),
            ));
            terms.push((
                MultiIndex::axis(n, j, 1),
                unit_column(dim_e, n, row, i, w / 2.0),
            ));
        }
    }
    Operator::new(n, 1, n, dim_e, terms, None)
}

fn hodge(n: usize, m: usize) -> Result<Operator> {
    let src = form_basis(n, m);
    let up = form_basis(n, m + 1);
    let down = form_basis(n, m - 1);
    let dim_v = src.len();
    let dim_e = up.len() + down.len();
    debug_assert_eq!(dim_e, binomial(n, m + 1) + binomial(n, m - 1));
    let mut coeffs: Vec<DMatrix<f64>> = vec![DMatrix::zeros(dim_e, dim_v); n];

    // exterior product: (ξ ∧ v)_J = Σ_p (-1)^p ξ_{J_p} v_{J \ J_p}
    for (row, big) in up.iter().enumerate() {
        for p in 0..big.len() {
            let mut small = big.clone();
            let axis = small.remove(p);
            let col = form_index(&src, &small);
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            coeffs[axis][(row, col)] += sign;
        }
    }
    // interior product: (ι_ξ v)_I = Σ_{j∉I} (-1)^{pos(j)} ξ_j v_{I ∪ j}
    for (r, small) in down.iter().enumerate() {
        let row = up.len() + r;
        for axis in 0..n {
            if small.contains(&axis) {
                continue;
            }
            let pos = small.iter().filter(|&&s| s < axis).count();
            let mut big = small.clone();
            big.insert(pos, axis);
            let col = form_index(&src, &big);
            let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
            coeffs[axis][(row, col)] += sign;
        }
    }
    let terms = coeffs
        .into_iter()
        .enumerate()
        .map(|(axis, m)| (MultiIndex::axis(n, axis, 1), m));
    Operator::new(n, 1, dim_v, dim_e, terms, None)
}

fn divergence(n: usize) -> Result<Operator> {
    let terms = (0..n).map(|i| (MultiIndex::axis(n, i, 1), unit_column(1, n, 0, i, 1.0)));
    Operator::new(n, 1, n, 1, terms, None)
}

fn curl3() -> Result<Operator> {
    // (ξ × v)_r = ξ_{r+1} v_{r+2} - ξ_{r+2} v_{r+1}
    let mut coeffs = vec![DMatrix::zeros(3, 3); 3];
    for r in 0..3 {
        let a = (r + 1) % 3;
        let b = (r + 2) % 3;
        coeffs[a][(r, b)] += 1.0;
        coeffs[b][(r, a)] -= 1.0;
    }
    let terms = coeffs
        .into_iter()
        .enumerate()
        .map(|(i, m)| (MultiIndex::axis(3, i, 1), m));
    Operator::new(3, 1, 3, 3, terms, None)
}

fn curl2() -> Result<Operator> {
    let terms = [
        (MultiIndex::axis(2, 1, 1), unit_column(1, 2, 0, 0, -1.0)),
        (MultiIndex::axis(2, 0, 1), unit_column(1, 2, 0, 1, 1.0)),
    ];
    Operator::new(2, 1, 2, 1, terms, None)
}

/// `(Le)_{ijkl} = ∂_{kl} e_{ij} + ∂_{ij} e_{kl} - ∂_{kj} e_{il} - ∂_{il} e_{kj}`
/// on symmetric matrices, with the 4-index target flattened as
/// `((i n + j) n + k) n + l`.
fn saint_venant(n: usize) -> Result<Operator> {
    let dim_v = sym_dim(n);
    let dim_e = n.pow(4);
    let mut terms = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let row = ((i * n + j) * n + k) * n + l;
                    let parts = [
                        (k, l, i, j, 1.0),
                        (i, j, k, l, 1.0),
                        (k, j, i, l, -1.0),
                        (i, l, k, j, -1.0),
                    ];
                    for (a, b, c, d, sign) in parts {
                        let col = sym_index(n, c, d);
                        terms.push((
                            MultiIndex::from_axes(n, &[a, b]),
                            unit_column(dim_e, dim_v, row, col, sign / sym_weight(c, d)),
                        ));
                    }
                }
            }
        }
    }
    Operator::new(n, 2, dim_v, dim_e, terms, None)
}

/// Multiplication by `(ξ₁ + iξ₂)^j` on `ℂ ≅ ℝ²`.
fn dbar_power(j: u32) -> Result<Operator> {
    let mut terms = Vec::new();
    for r in 0..=j {
        let c = binomial(j as usize, r as usize) as f64;
        // i^r
        let (re, im) = match r % 4 {
            0 => (c, 0.0),
            1 => (0.0, c),
            2 => (-c, 0.0),
            _ => (0.0, -c),
        };
        let m = DMatrix::from_row_slice(2, 2, &[re, -im, im, re]);
        terms.push((MultiIndex::new(vec![j - r, r]), m));
    }
    Operator::new(2, j as usize, 2, 2, terms, None)
}

fn partial_slice(n: usize) -> Result<Operator> {
    let terms = (0..n).map(|i| (MultiIndex::axis(n, i, 1), unit_column(n, 2, i, 0, 1.0)));
    Operator::new(n, 1, 2, n, terms, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::bases::vec_to_sym;

    fn op(name: &str, n: usize, kv: &[(&str, i64)]) -> Operator {
        let params = kv.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        get(name, n, &params).unwrap()
    }

    #[test]
    fn grad_shape_and_symbol() {
        let g = op("grad", 3, &[]);
        assert_eq!((g.order(), g.dim_v(), g.dim_e()), (1, 1, 3));
        let g2 = op("grad", 2, &[]);
        let s = g2.eval_symbol(&[1.0, 0.0]).unwrap().matrix;
        assert_eq!(s, DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
    }

    #[test]
    fn laplacian_symbol_is_squared_norm() {
        let l = op("laplacian", 2, &[]);
        assert_eq!(l.eval_symbol(&[3.0, 4.0]).unwrap().matrix[(0, 0)], 25.0);
    }

    #[test]
    fn sym_grad_symbol_matches_symmetrised_product() {
        let s = op("sym_grad", 2, &[]);
        let a = s.eval_symbol(&[1.0, 2.0]).unwrap().matrix;
        let v = nalgebra::DVector::from_vec(vec![1.0, 0.0]);
        let packed = &a * v;
        let m = vec_to_sym(2, packed.as_slice());
        assert!((m - DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn hodge_dimensions() {
        let h = op("hodge", 4, &[("m", 2)]);
        assert_eq!((h.order(), h.dim_v(), h.dim_e()), (1, 6, 8));
        let h13 = op("hodge", 3, &[("m", 1)]);
        assert_eq!((h13.dim_v(), h13.dim_e()), (3, 4));
    }

    #[test]
    fn hodge_symbol_is_isometric_up_to_norm() {
        // |ξ∧v|² + |ι_ξ v|² = |ξ|²|v|²  ⇔  A(ξ)ᵀA(ξ) = |ξ|² I
        for (n, m) in [(3, 1), (3, 2), (4, 1), (4, 2), (4, 3), (5, 2)] {
            let h = op("hodge", n, &[("m", m)]);
            let xi: Vec<f64> = (0..n).map(|i| 0.3 + i as f64 * 0.7 - 1.1).collect();
            let r2: f64 = xi.iter().map(|x| x * x).sum();
            let a = h.eval_symbol(&xi).unwrap().matrix;
            let gram = a.transpose() * &a;
            let want = DMatrix::<f64>::identity(h.dim_v(), h.dim_v()) * r2;
            assert!((gram - want).norm() < 1e-12, "n={n} m={m}");
        }
    }

    #[test]
    fn hodge_rejects_extreme_degrees() {
        let mut p = Params::new();
        p.insert("m".into(), 0);
        assert!(matches!(
            get("hodge", 3, &p),
            Err(Error::InvalidParams { .. })
        ));
        p.insert("m".into(), 3);
        assert!(get("hodge", 3, &p).is_err());
    }

    #[test]
    fn dbar_power_symbol() {
        let d = op("dbar_power", 2, &[("j", 2)]);
        let a = d.eval_symbol(&[1.0, 2.0]).unwrap().matrix;
        // (1 + 2i)^2 = -3 + 4i
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[-3.0, -4.0, 4.0, -3.0]));
        assert!(get("dbar_power", 3, &Params::new()).is_err());
    }

    #[test]
    fn unknown_names_and_parameters() {
        assert!(matches!(
            get("nabla", 2, &Params::new()),
            Err(Error::UnknownOperator(_))
        ));
        let mut p = Params::new();
        p.insert("q".into(), 1);
        assert!(get("grad", 2, &p).is_err());
    }

    #[test]
    fn descriptors_round_trip() {
        let (name, n, params) = parse_descriptor("hodge:n=4,m=2").unwrap();
        assert_eq!((name.as_str(), n, params["m"]), ("hodge", 4, 2));
        let h = from_descriptor("hodge:n=4,m=2").unwrap();
        assert_eq!(h.name(), Some("hodge:n=4,m=2"));
        let g = from_descriptor("grad").unwrap();
        assert_eq!(g.n(), 2);
        assert!(parse_descriptor("grad:n=x").is_err());
    }

    #[test]
    fn catalog_is_complete() {
        assert!(ENTRIES.len() >= 10);
        for e in ENTRIES {
            assert!(
                get(e.name, e.default_n, &Params::new()).is_ok(),
                "{}",
                e.name
            );
        }
    }

    #[test]
    fn saint_venant_annihilates_symmetric_gradients() {
        for n in [2, 3] {
            let a = op("sym_grad", n, &[]);
            let l = op("saint_venant", n, &[]);
            assert_eq!((l.dim_v(), l.dim_e()), (sym_dim(n), n.pow(4)));
            let xi: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.37).collect();
            let prod = l.eval_symbol(&xi).unwrap().matrix * a.eval_symbol(&xi).unwrap().matrix;
            assert!(prod.norm() < 1e-12);
        }
    }

    #[test]
    fn curl_annihilates_gradients() {
        let c = op("curl3", 3, &[]);
        let g = op("grad", 3, &[]);
        let xi = [0.2, -1.3, 0.8];
        let prod = c.eval_symbol(&xi).unwrap().matrix * g.eval_symbol(&xi).unwrap().matrix;
        assert!(prod.norm() < 1e-15);
        let c2 = op("curl2", 2, &[]);
        let g2 = op("grad", 2, &[]);
        let prod = c2.eval_symbol(&[0.4, 1.1]).unwrap().matrix
            * g2.eval_symbol(&[0.4, 1.1]).unwrap().matrix;
        assert!(prod.norm() < 1e-15);
    }
}
