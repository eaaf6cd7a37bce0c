//! Central finite-difference verification of analytic gradients.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::store::ParamStore;
use crate::error::{Error, Result};

pub const DEFAULT_PERTURBATION: f64 = 1e-5;

/// One probed scalar: parameter name and flat index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coord {
    pub name: String,
    pub index: usize,
}

#[derive(Debug, Clone)]
pub struct CoordCheck {
    pub coord: Coord,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// All probes, worst first.
    pub checks: Vec<CoordCheck>,
}

impl GradCheckReport {
    pub fn worst(&self, n: usize) -> &[CoordCheck] {
        &self.checks[..n.min(self.checks.len())]
    }

    pub fn tables_covered(&self) -> std::collections::BTreeSet<&str> {
        self.checks.iter().map(|c| c.coord.name.as_str()).collect()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the gradients currently held in `store` with central differences
/// of `loss_fn` at each coordinate.
pub fn finite_diff_gradcheck<F>(
    store: &mut ParamStore,
    mut loss_fn: F,
    coords: &[Coord],
    perturbation: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let mut checks = Vec::with_capacity(coords.len());
    for coord in coords {
        let analytic = store.grad(&coord.name)?.data()[coord.index];
        let original = store.value(&coord.name)?.data()[coord.index];
        let mut eval_at = |store: &mut ParamStore, v: f64| -> Result<f64> {
            store.value_mut(&coord.name)?.data_mut()[coord.index] = v;
            let loss = loss_fn(store)?;
            if !loss.is_finite() {
                return Err(Error::GradCheck(format!(
                    "non-finite loss while probing {}[{}]",
                    coord.name, coord.index
                )));
            }
            Ok(loss)
        };
        let plus = eval_at(store, original + perturbation);
        let minus = eval_at(store, original - perturbation);
        store.value_mut(&coord.name)?.data_mut()[coord.index] = original;
        let numeric = (plus? - minus?) / (2.0 * perturbation);
        checks.push(CoordCheck {
            coord: coord.clone(),
            analytic,
            numeric,
            rel_err: relative_error(analytic, numeric),
        });
    }
    checks.sort_by(|a, b| b.rel_err.total_cmp(&a.rel_err));
    let max_rel_err = checks.first().map_or(0.0, |c| c.rel_err);
    Ok(GradCheckReport { max_rel_err, checks })
}

/// Analytic gradients smaller than this are compared against little more than
/// central-difference roundoff (about `ulp(L) / 2ε`), so the sampler avoids them.
pub const GRAD_SIGNAL_FLOOR: f64 = 1e-6;

/// Samples `n` coordinates spanning every parameter table.
///
/// Tables are visited round-robin so each gets probes. Within a table, rows that
/// received any gradient are preferred for tables listed in `sparse_tables`
/// (embedding lookups touch only a few rows), and entries whose analytic
/// gradient clears [`GRAD_SIGNAL_FLOOR`] are preferred over the rest. A table
/// with no such entries is still probed.
pub fn sample_coordinates<R: Rng>(
    store: &ParamStore,
    n: usize,
    sparse_tables: impl Fn(&str) -> bool,
    rng: &mut R,
) -> Vec<Coord> {
    let pools: Vec<(String, Vec<usize>)> = store
        .iter()
        .map(|(name, entry)| {
            let len = entry.value.len();
            let grad = entry.grad.data();
            let mut base: Vec<usize> = if sparse_tables(name) {
                let width = entry.value.cols();
                (0..entry.value.rows())
                    .filter(|&r| entry.grad.row(r).iter().any(|&g| g != 0.0))
                    .flat_map(|r| r * width..(r + 1) * width)
                    .collect()
            } else {
                Vec::new()
            };
            if base.is_empty() {
                base = (0..len).collect();
            }
            let live: Vec<usize> = base.iter().copied().filter(|&i| grad[i].abs() >= GRAD_SIGNAL_FLOOR).collect();
            (name.to_string(), if live.is_empty() { base } else { live })
        })
        .filter(|(_, c)| !c.is_empty())
        .collect();
    if pools.is_empty() {
        return Vec::new();
    }
    (0..n)
        .map(|i| {
            let (name, pool) = &pools[i % pools.len()];
            Coord {
                name: name.clone(),
                index: *pool.choose(rng).expect("non-empty pool"),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn quadratic_store(theta: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("theta", Tensor::scalar(theta)).unwrap();
        s
    }

    fn quad_loss(s: &ParamStore) -> Result<f64> {
        let t = s.value("theta")?.data()[0];
        Ok(t * t)
    }

    fn coord() -> Vec<Coord> {
        vec![Coord {
            name: "theta".into(),
            index: 0,
        }]
    }

    #[test]
    fn quadratic_is_exact() {
        let mut s = quadratic_store(3.0);
        s.entry_mut("theta").unwrap().grad.data_mut()[0] = 6.0;
        let report = finite_diff_gradcheck(&mut s, quad_loss, &coord(), DEFAULT_PERTURBATION).unwrap();
        assert!(report.max_rel_err < 1e-9, "{}", report.max_rel_err);
        assert_eq!(s.value("theta").unwrap().data()[0], 3.0);
    }

    #[test]
    fn planted_fault_is_reported() {
        let mut s = quadratic_store(3.0);
        s.entry_mut("theta").unwrap().grad.data_mut()[0] = 6.6;
        let report = finite_diff_gradcheck(&mut s, quad_loss, &coord(), DEFAULT_PERTURBATION).unwrap();
        // |6.6 - 6| / 6.6
        assert!((report.max_rel_err - 0.6 / 6.6).abs() < 1e-8);
        assert_eq!(report.checks[0].coord.name, "theta");
    }

    #[test]
    fn non_finite_loss_names_coordinate() {
        let mut s = quadratic_store(3.0);
        let err = finite_diff_gradcheck(&mut s, |_| Ok(f64::NAN), &coord(), 1e-5).unwrap_err();
        assert!(err.to_string().contains("theta[0]"));
        assert_eq!(s.value("theta").unwrap().data()[0], 3.0);
    }

    #[test]
    fn sampling_spans_all_tables() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::zeros(&[3, 2])).unwrap();
        s.insert("emb", Tensor::zeros(&[10, 2])).unwrap();
        s.entry_mut("emb").unwrap().grad.data_mut()[14] = 1.0;
        let mut rng = rand::rng();
        let coords = sample_coordinates(&s, 20, |n| n == "emb", &mut rng);
        assert_eq!(coords.len(), 20);
        assert!(coords.iter().any(|c| c.name == "a"));
        for c in coords.iter().filter(|c| c.name == "emb") {
            assert!(c.index == 14 || c.index == 15);
        }
    }
}
