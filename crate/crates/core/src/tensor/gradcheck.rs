//! Central finite-difference verification of tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, TensorError, Var};

/// Worst-case disagreement between autodiff and finite differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Number of scalar entries compared.
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }

    fn merge(&mut self, other: GradCheckReport) {
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        self.max_abs_err = self.max_abs_err.max(other.max_abs_err);
        self.checked += other.checked;
    }
}

impl Default for GradCheckReport {
    fn default() -> Self {
        Self { max_rel_err: 0.0, max_abs_err: 0.0, checked: 0 }
    }
}

/// Denominator floor for the relative error, so entries whose true
/// gradient is zero are judged on absolute error.
const REL_FLOOR: f64 = 1e-6;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares the tape gradient of a scalar function of one input against
/// central differences with the given step.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, step: f64) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var, TensorError>,
{
    grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), step, None)
}

/// Multi-input form of [`grad_check`].
///
/// When `max_entries` is set, at most that many entries per input are
/// probed, spread evenly over the tensor.
pub fn grad_check_many<F, E>(
    f: F,
    inputs: &[Tensor<f64>],
    step: f64,
    max_entries: Option<usize>,
) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, E>,
    E: From<TensorError>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64, E> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.param(v.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let value = tape.value(out);
        if value.len() != 1 {
            return Err(TensorError::NonScalarLoss(value.shape().to_vec()).into());
        }
        Ok(value.data()[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.param(v.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut report = GradCheckReport::default();
    let mut work = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let len = inputs[k].len();
        let analytic = grads.get(*var).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; len]);
        let stride = match max_entries {
            Some(cap) if cap > 0 && len > cap => len.div_ceil(cap),
            _ => 1,
        };
        let mut part = GradCheckReport::default();
        for i in (0..len).step_by(stride) {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + step;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = orig - step;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            part.max_abs_err = part.max_abs_err.max((analytic[i] - numeric).abs());
            part.max_rel_err = part.max_rel_err.max(rel_err(analytic[i], numeric));
            part.checked += 1;
        }
        report.merge(part);
    }
    Ok(report)
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Reduces an arbitrary matrix to a scalar with position-dependent
/// weights so that every output entry's adjoint differs.
fn weighted_sum(tape: &mut Tape<f64>, y: Var) -> Result<Var, TensorError> {
    let shape = tape.value(y).shape().to_vec();
    let w = tape.constant(Tensor::from_fn(&shape, |i| ((i * 7 % 11) as f64 - 5.0) * 0.13 + 0.05));
    let p = tape.mul(y, w)?;
    tape.sum_all(p)
}

/// Checks every differentiable tape operation on random shapes, `trials`
/// times. Each entry is named `<op>#<trial>`.
pub fn op_suite(seed: u64, trials: usize) -> Result<Vec<(String, GradCheckReport)>, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for trial in 0..trials {
        let m = rng.random_range(1..5);
        let k = rng.random_range(1..5);
        let n = rng.random_range(2..6);
        let a = random(&[m, k], &mut rng);
        let b = random(&[k, n], &mut rng);
        let bt = random(&[n, k], &mut rng);
        let c = random(&[m, n], &mut rng);
        let row = random(&[1, n], &mut rng);
        let checks: Vec<(&str, GradCheckReport)> = vec![
            (
                "matmul",
                grad_check_many(|t, v| { let y = t.matmul(v[0], v[1])?; weighted_sum(t, y) }, &[a.clone(), b.clone()], 1e-5, None)?,
            ),
            (
                "matmul_t",
                grad_check_many(|t, v| { let y = t.matmul_ex(v[0], v[1], false, true, 0.7)?; weighted_sum(t, y) }, &[a.clone(), bt.clone()], 1e-5, None)?,
            ),
            (
                "matmul_ta",
                grad_check_many(|t, v| { let y = t.matmul_ex(v[0], v[1], true, false, 1.3)?; weighted_sum(t, y) }, &[a.clone(), c.clone()], 1e-5, None)?,
            ),
            (
                "add",
                grad_check_many(|t, v| { let y = t.add(v[0], v[1])?; weighted_sum(t, y) }, &[c.clone(), c.clone()], 1e-5, None)?,
            ),
            (
                "mul",
                grad_check_many(|t, v| { let y = t.mul(v[0], v[1])?; weighted_sum(t, y) }, &[c.clone(), random(&[m, n], &mut rng)], 1e-5, None)?,
            ),
            (
                "add_row",
                grad_check_many(|t, v| { let y = t.add_row(v[0], v[1])?; weighted_sum(t, y) }, &[c.clone(), row.clone()], 1e-5, None)?,
            ),
            ("scale", grad_check(|t, v| { let y = t.scale(v, -1.7)?; weighted_sum(t, y) }, &c, 1e-5)?),
            (
                "layer_norm",
                grad_check_many(
                    |t, v| { let y = t.layer_norm(v[0], v[1], v[2], 1e-6)?; weighted_sum(t, y) },
                    &[random(&[m, n], &mut rng), random(&[1, n], &mut rng), row.clone()],
                    1e-5,
                    None,
                )
                ?,
            ),
            ("gelu", grad_check(|t, v| { let y = t.gelu(v)?; weighted_sum(t, y) }, &c, 1e-5)?),
            ("softmax1", grad_check(|t, v| { let y = t.softmax(v, 1)?; weighted_sum(t, y) }, &c, 1e-5)?),
            ("softmax0", grad_check(|t, v| { let y = t.softmax(v, 0)?; weighted_sum(t, y) }, &c, 1e-5)?),
            (
                "concat_rows",
                grad_check_many(|t, v| { let y = t.concat_rows(&[v[0], v[1], v[0]])?; weighted_sum(t, y) }, &[c.clone(), row.clone()], 1e-5, None)?,
            ),
            (
                "concat_cols",
                grad_check_many(|t, v| { let y = t.concat_cols(&[v[1], v[0]])?; weighted_sum(t, y) }, &[a.clone(), c.clone()], 1e-5, None)?,
            ),
            (
                "slice_rows",
                grad_check(|t, v| { let y = t.slice_rows(v, m - 1, 1)?; weighted_sum(t, y) }, &c, 1e-5)?,
            ),
            (
                "slice_cols",
                grad_check(|t, v| { let y = t.slice_cols(v, 1, n - 1)?; weighted_sum(t, y) }, &c, 1e-5)?,
            ),
            ("mean_rows", grad_check(|t, v| { let y = t.mean_rows(v)?; weighted_sum(t, y) }, &c, 1e-5)?),
            (
                "bce",
                grad_check(
                    |t, v| {
                        let y = t.slice_rows(v, 0, 1)?;
                        let z = t.slice_cols(y, 0, 1)?;
                        t.bce_with_logits(z, (trial % 2) as f64)
                    },
                    &c,
                    1e-5,
                )
                ?,
            ),
        ];
        out.extend(checks.into_iter().map(|(name, r)| (format!("{name}#{trial}"), r)));
    }
    Ok(out)
}
