use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use super::mlp::{affine, column_sum};
use super::Mlp;
use crate::{Error, Result};

/// One recorded batched forward evaluation of an [`Mlp`].
///
/// Holds everything needed to reverse-accumulate cotangents on the output
/// and, for scalar-output networks, on the input gradient `∇ₓ`.
pub struct Tape<'a> {
    net: &'a Mlp,
    input: Array2<f64>,
    /// Hidden activations `A_h`.
    act: Vec<Array2<f64>>,
    /// `σ'(Z_h)`.
    d1: Vec<Array2<f64>>,
    /// `σ''(Z_h)`; empty unless the gradient program was recorded.
    d2: Vec<Array2<f64>>,
    /// `D_h` of the gradient program.
    deltas: Vec<Array2<f64>>,
    /// `U_h = D_{h+1} W_{h+1}` for `h < L-1`.
    carries: Vec<Array2<f64>>,
    output: Array2<f64>,
    gradient: Option<Array2<f64>>,
}

impl<'a> Tape<'a> {
    pub(crate) fn record(net: &'a Mlp, xs: ArrayView2<'_, f64>) -> Result<Self> {
        net.check_batch(&xs)?;
        let act_fn = net.activation();
        let hidden = net.hidden_widths().len();
        let with_gradient = net.output_dim() == 1;

        let mut act: Vec<Array2<f64>> = Vec::with_capacity(hidden);
        let mut d1 = Vec::with_capacity(hidden);
        let mut d2 = Vec::with_capacity(if with_gradient { hidden } else { 0 });
        for h in 0..hidden {
            let prev = if h == 0 { xs } else { act[h - 1].view() };
            let z = affine(prev, net.weights(h), net.bias(h));
            let mut a = Array2::zeros(z.raw_dim());
            let mut s1 = Array2::zeros(z.raw_dim());
            if with_gradient {
                let mut s2 = Array2::zeros(z.raw_dim());
                Zip::from(&z)
                    .and(&mut a)
                    .and(&mut s1)
                    .and(&mut s2)
                    .for_each(|&z, a, s1, s2| {
                        let (v, p, q) = act_fn.eval_all(z);
                        *a = v;
                        *s1 = p;
                        *s2 = q;
                    });
                d2.push(s2);
            } else {
                Zip::from(&z).and(&mut a).and(&mut s1).for_each(|&z, a, s1| {
                    let (v, p, _) = act_fn.eval_all(z);
                    *a = v;
                    *s1 = p;
                });
            }
            act.push(a);
            d1.push(s1);
        }
        let output = affine(act[hidden - 1].view(), net.weights(hidden), net.bias(hidden));

        let mut tape = Tape {
            net,
            input: xs.to_owned(),
            act,
            d1,
            d2,
            deltas: Vec::new(),
            carries: Vec::new(),
            output,
            gradient: None,
        };
        if with_gradient {
            tape.record_gradient_program();
        }
        Ok(tape)
    }

    fn record_gradient_program(&mut self) {
        let net = self.net;
        let hidden = self.act.len();
        let w_out = net.weights(hidden);
        let w_out = w_out.row(0);

        let mut deltas: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); hidden];
        let mut carries: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); hidden.saturating_sub(1)];
        let mut top = self.d1[hidden - 1].clone();
        Zip::from(top.rows_mut()).for_each(|mut r| r *= &w_out);
        deltas[hidden - 1] = top;
        for h in (0..hidden - 1).rev() {
            let u = deltas[h + 1].dot(&net.weights(h + 1));
            deltas[h] = &self.d1[h] * &u;
            carries[h] = u;
        }
        self.gradient = Some(deltas[0].dot(&net.weights(0)));
        self.deltas = deltas;
        self.carries = carries;
    }

    pub fn net(&self) -> &Mlp {
        self.net
    }

    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }

    pub fn input(&self) -> ArrayView2<'_, f64> {
        self.input.view()
    }

    /// Network outputs, `batch × output_dim`.
    pub fn output(&self) -> ArrayView2<'_, f64> {
        self.output.view()
    }

    /// `∇ₓ` of the output, `batch × input_dim`; `None` for vector-output nets.
    pub fn input_gradient(&self) -> Option<ArrayView2<'_, f64>> {
        self.gradient.as_ref().map(|g| g.view())
    }

    /// Reverse pass.
    ///
    /// `out_bar` is the cotangent of the output (`batch × output_dim`),
    /// `grad_bar` the cotangent of the input gradient (`batch × input_dim`,
    /// scalar nets only). Parameter gradients are *added* to `param_grad`.
    /// Returns the input cotangent when `want_input` is set; for `grad_bar`
    /// this is the Hessian-vector product `H · grad_bar` per row.
    pub fn backward(
        &self,
        out_bar: Option<ArrayView2<'_, f64>>,
        grad_bar: Option<ArrayView2<'_, f64>>,
        param_grad: &mut [f64],
        want_input: bool,
    ) -> Result<Option<Array2<f64>>> {
        let net = self.net;
        let hidden = self.act.len();
        let batch = self.batch_size();
        if param_grad.len() != net.params().len() {
            return Err(Error::DimensionMismatch {
                what: "parameter gradient buffer",
                expected: net.params().len(),
                actual: param_grad.len(),
            });
        }
        let mut zbar: Vec<Array2<f64>> = self
            .act
            .iter()
            .map(|a| Array2::zeros(a.raw_dim()))
            .collect();

        if let Some(gbar) = grad_bar {
            if self.gradient.is_none() {
                return Err(Error::invalid(
                    "input-gradient cotangent requires a scalar-output network",
                ));
            }
            check_shape("input-gradient cotangent", gbar, batch, net.input_dim())?;
            {
                let (mut w0, _) = net.layer_grad_mut(param_grad, 0);
                general_mat_mul(1.0, &self.deltas[0].t(), &gbar, 1.0, &mut w0);
            }
            let mut dbar = gbar.dot(&net.weights(0).t());
            let w_out = net.weights(hidden);
            let w_out = w_out.row(0);
            for h in 0..hidden {
                let mut ubar = Array2::zeros(dbar.raw_dim());
                if h + 1 < hidden {
                    second_order_step(&mut zbar[h], &mut ubar, &self.d1[h], &self.d2[h], self.carries[h].view(), &dbar);
                    let (mut w, _) = net.layer_grad_mut(param_grad, h + 1);
                    general_mat_mul(1.0, &self.deltas[h + 1].t(), &ubar, 1.0, &mut w);
                    dbar = ubar.dot(&net.weights(h + 1).t());
                } else {
                    let wb = w_out.broadcast(dbar.raw_dim()).expect("row broadcast");
                    second_order_step(&mut zbar[h], &mut ubar, &self.d1[h], &self.d2[h], wb, &dbar);
                    let (mut w, _) = net.layer_grad_mut(param_grad, hidden);
                    let mut row = w.row_mut(0);
                    row += &column_sum(&ubar);
                }
            }
        }

        if let Some(obar) = out_bar {
            check_shape("output cotangent", obar, batch, net.output_dim())?;
            let (mut w, mut b) = net.layer_grad_mut(param_grad, hidden);
            general_mat_mul(1.0, &obar.t(), &self.act[hidden - 1], 1.0, &mut w);
            b += &obar.sum_axis(ndarray::Axis(0));
            let abar = obar.dot(&net.weights(hidden));
            add_product(&mut zbar[hidden - 1], &self.d1[hidden - 1], &abar);
        }

        let mut input_bar = None;
        for h in (0..hidden).rev() {
            let prev = if h == 0 {
                self.input.view()
            } else {
                self.act[h - 1].view()
            };
            {
                let (mut w, mut b) = net.layer_grad_mut(param_grad, h);
                b += &column_sum(&zbar[h]);
                general_mat_mul(1.0, &zbar[h].t(), &prev, 1.0, &mut w);
            }
            if h > 0 {
                let abar = zbar[h].dot(&net.weights(h));
                add_product(&mut zbar[h - 1], &self.d1[h - 1], &abar);
            } else if want_input {
                input_bar = Some(zbar[0].dot(&net.weights(0)));
            }
        }
        Ok(input_bar)
    }
}

/// `out += a ⊙ b`.
fn add_product(out: &mut Array2<f64>, a: &Array2<f64>, b: &Array2<f64>) {
    Zip::from(out).and(a).and(b).for_each(|o, &x, &y| *o += x * y);
}

/// `zbar += σ'' ⊙ u ⊙ dbar` and `ubar = σ' ⊙ dbar`.
fn second_order_step(
    zbar: &mut Array2<f64>,
    ubar: &mut Array2<f64>,
    s1: &Array2<f64>,
    s2: &Array2<f64>,
    u: ArrayView2<'_, f64>,
    dbar: &Array2<f64>,
) {
    Zip::from(zbar)
        .and(ubar)
        .and(s1)
        .and(s2)
        .and(&u)
        .and(dbar)
        .for_each(|zb, ub, &s1, &s2, &u, &db| {
            *zb += s2 * u * db;
            *ub = s1 * db;
        });
}

fn check_shape(what: &'static str, a: ArrayView2<'_, f64>, rows: usize, cols: usize) -> Result<()> {
    if a.nrows() != rows {
        return Err(Error::DimensionMismatch {
            what,
            expected: rows,
            actual: a.nrows(),
        });
    }
    if a.ncols() != cols {
        return Err(Error::DimensionMismatch {
            what,
            expected: cols,
            actual: a.ncols(),
        });
    }
    Ok(())
}

/// Value and parameter gradient of `Σ_i φ_i(V(x_i), ∇V(x_i))`.
#[derive(Debug, Clone)]
pub struct ObjectiveGradient {
    pub value: f64,
    pub params: Vec<f64>,
}

/// Parameter gradient of a scalar objective built from a scalar network's
/// values and input gradients over a batch.
///
/// `term(i, value, grad)` returns `(φ_i, ∂φ_i/∂value, ∂φ_i/∂grad)`. The total
/// objective is the sum of the terms; a non-finite term aborts with its row
/// index.
pub fn potential_objective_gradient<F>(
    net: &Mlp,
    xs: ArrayView2<'_, f64>,
    term: F,
) -> Result<ObjectiveGradient>
where
    F: Fn(usize, f64, ArrayView1<'_, f64>) -> (f64, f64, Array1<f64>),
{
    net.require_scalar()?;
    let tape = net.tape(xs)?;
    let grads = tape.input_gradient().expect("scalar tape");
    let batch = tape.batch_size();
    let mut obar = Array2::zeros((batch, 1));
    let mut gbar = Array2::zeros((batch, net.input_dim()));
    let mut value = 0.0;
    for i in 0..batch {
        let (phi, dv, dg) = term(i, tape.output()[[i, 0]], grads.row(i));
        if !phi.is_finite() {
            return Err(Error::NonFinite {
                context: "objective",
                index: i,
            });
        }
        if dg.len() != net.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "objective gradient partial",
                expected: net.input_dim(),
                actual: dg.len(),
            });
        }
        value += phi;
        obar[[i, 0]] = dv;
        gbar.row_mut(i).assign(&dg);
    }
    let mut params = vec![0.0; net.params().len()];
    tape.backward(Some(obar.view()), Some(gbar.view()), &mut params, false)?;
    Ok(ObjectiveGradient { value, params })
}
