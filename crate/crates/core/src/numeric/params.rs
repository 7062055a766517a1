//! Named trainable tensors, the Adam optimizer, and the checkpoint format.
//!
//! # Checkpoint layout
//!
//! A checkpoint is UTF-8 text. The first line is the magic string `DYTG1`.
//! Every parameter then occupies two lines, in registration order:
//!
//! ```text
//! <name> <rows> <cols>
//! <v_0> <v_1> ... <v_{rows*cols-1}>
//! ```
//!
//! Values are row-major and printed with Rust's shortest round-trip `f64`
//! formatting, so loading reproduces every bit. Names contain no whitespace.
//! Optimizer moments are not saved.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "DYTG1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Parameter {
    name: String,
    value: DenseMatrix,
    grad: DenseMatrix,
    first_moment: DenseMatrix,
    second_moment: DenseMatrix,
}

#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
    step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, value: DenseMatrix) -> Result<()> {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidInput(format!("invalid parameter name `{name}`")));
        }
        if self.index.contains_key(name) {
            return Err(Error::DuplicateParameter(name.to_string()));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("initial value of `{name}`")));
        }
        let (r, c) = value.shape();
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Parameter {
            name: name.to_string(),
            value,
            grad: DenseMatrix::zeros(r, c),
            first_moment: DenseMatrix::zeros(r, c),
            second_moment: DenseMatrix::zeros(r, c),
        });
        Ok(())
    }

    fn get(&self, name: &str) -> Result<&Parameter> {
        self.index
            .get(name)
            .map(|&i| &self.params[i])
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    fn get_mut(&mut self, name: &str) -> Result<&mut Parameter> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.params[i]),
            None => Err(Error::UnknownParameter(name.to_string())),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Names in registration order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn value(&self, name: &str) -> Result<&DenseMatrix> {
        Ok(&self.get(name)?.value)
    }

    pub fn grad(&self, name: &str) -> Result<&DenseMatrix> {
        Ok(&self.get(name)?.grad)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Overwrites a parameter value; the shape must not change.
    pub fn set_value(&mut self, name: &str, value: DenseMatrix) -> Result<()> {
        let p = self.get_mut(name)?;
        if p.value.shape() != value.shape() {
            return Err(Error::Shape(format!(
                "`{name}` is {}x{}, new value is {}x{}",
                p.value.rows(),
                p.value.cols(),
                value.rows(),
                value.cols()
            )));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("new value of `{name}`")));
        }
        p.value = value;
        Ok(())
    }

    pub(crate) fn value_mut(&mut self, name: &str) -> Result<&mut DenseMatrix> {
        Ok(&mut self.get_mut(name)?.value)
    }

    pub fn add_grad(&mut self, name: &str, delta: &DenseMatrix) -> Result<()> {
        let p = self.get_mut(name)?;
        if p.grad.shape() != delta.shape() {
            return Err(Error::Shape(format!("gradient shape mismatch for `{name}`")));
        }
        p.grad.add_assign(delta);
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// One Adam update with bias correction. Gradients are left in place.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        if let Some(p) = self.params.iter().find(|p| !p.grad.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of `{}`", p.name)));
        }
        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - cfg.beta1.powi(t);
        let correction2 = 1.0 - cfg.beta2.powi(t);
        for p in &mut self.params {
            let grads = p.grad.data();
            let m = p.first_moment.data_mut();
            for (mi, &g) in m.iter_mut().zip(grads) {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
            }
            let v = p.second_moment.data_mut();
            for (vi, &g) in v.iter_mut().zip(grads) {
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
            }
            let m = p.first_moment.data();
            let v = p.second_moment.data();
            for ((theta, &mi), &vi) in p.value.data_mut().iter_mut().zip(m).zip(v) {
                let m_hat = mi / correction1;
                let v_hat = vi / correction2;
                *theta -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }

    /// Copies values only; gradients and moments of `self` are reset.
    pub fn load_values_from(&mut self, other: &ParameterStore) -> Result<()> {
        for p in &mut self.params {
            let src = other.get(&p.name)?;
            if src.value.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!("shape mismatch for `{}`", p.name)));
            }
            p.value = src.value.clone();
        }
        Ok(())
    }

    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::new();
        writeln!(buf, "{CHECKPOINT_MAGIC}").unwrap();
        for p in &self.params {
            writeln!(buf, "{} {} {}", p.name, p.value.rows(), p.value.cols()).unwrap();
            let mut first = true;
            for v in p.value.data() {
                if !first {
                    buf.push(' ');
                }
                first = false;
                write!(buf, "{v:?}").unwrap();
            }
            buf.push('\n');
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        match lines.next() {
            Some(Ok(l)) if l.trim_end() == CHECKPOINT_MAGIC => {}
            Some(Err(e)) => return Err(e.into()),
            _ => return Err(Error::Checkpoint(format!("missing `{CHECKPOINT_MAGIC}` header"))),
        }
        let mut store = ParameterStore::new();
        while let Some(header) = lines.next() {
            let header = header?;
            if header.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = header.split_whitespace().collect();
            let [name, rows, cols] = fields[..] else {
                return Err(Error::Checkpoint(format!("bad parameter header `{header}`")));
            };
            let parse_dim = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::Checkpoint(format!("bad dimension `{s}` for `{name}`")))
            };
            let (rows, cols) = (parse_dim(rows)?, parse_dim(cols)?);
            let body = lines
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("missing values for `{name}`")))??;
            let values = body
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::Checkpoint(format!("bad value `{t}` in `{name}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            let value = DenseMatrix::from_vec(rows, cols, values)
                .map_err(|e| Error::Checkpoint(format!("`{name}`: {e}")))?;
            store.register(name, value)?;
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(theta: f64, grad: f64) -> ParameterStore {
        let mut s = ParameterStore::new();
        s.register("theta", DenseMatrix::scalar(theta).unwrap()).unwrap();
        s.add_grad("theta", &DenseMatrix::scalar(grad).unwrap()).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = scalar_store(0.7, 0.0);
        s.adam_step(&AdamConfig::with_learning_rate(0.1)).unwrap();
        assert_eq!(s.value("theta").unwrap().get(0, 0), 0.7);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², so the step is lr · g / (|g| + eps).
        let mut s = scalar_store(1.0, 1.0);
        s.adam_step(&AdamConfig::with_learning_rate(0.1)).unwrap();
        let moved = 1.0 - s.value("theta").unwrap().get(0, 0);
        assert!((moved - 0.1 / (1.0 + 1e-8)).abs() < 1e-15, "{moved}");
        assert_eq!(s.grad("theta").unwrap().get(0, 0), 1.0);
    }

    #[test]
    fn repeated_steps_move_monotonically() {
        let mut s = scalar_store(0.0, 2.0);
        let cfg = AdamConfig::with_learning_rate(0.05);
        let mut prev = 0.0;
        for _ in 0..3 {
            s.adam_step(&cfg).unwrap();
            let now = s.value("theta").unwrap().get(0, 0);
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut s = scalar_store(0.0, 0.0);
        s.params[0].grad.data_mut()[0] = f64::NAN;
        assert!(s.adam_step(&AdamConfig::default()).is_err());
        assert_eq!(s.step_count(), 0);
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut s = ParameterStore::new();
        s.register("a", DenseMatrix::zeros(1, 1)).unwrap();
        assert!(matches!(
            s.register("a", DenseMatrix::zeros(1, 1)),
            Err(Error::DuplicateParameter(_))
        ));
        assert!(s.set_value("a", DenseMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut s = ParameterStore::new();
        s.register("w", DenseMatrix::from_vec(2, 2, vec![0.1, -1.0 / 3.0, 1e-300, 5e17]).unwrap())
            .unwrap();
        s.register("b", DenseMatrix::from_vec(1, 1, vec![-0.0]).unwrap()).unwrap();
        let mut bytes = Vec::new();
        s.write_checkpoint(&mut bytes).unwrap();
        assert!(bytes.starts_with(b"DYTG1\n"));
        let loaded = ParameterStore::read_checkpoint(&bytes[..]).unwrap();
        assert_eq!(loaded.names().collect::<Vec<_>>(), vec!["w", "b"]);
        for name in ["w", "b"] {
            let a: Vec<u64> = s.value(name).unwrap().data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = loaded.value(name).unwrap().data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn checkpoint_rejects_bad_magic() {
        assert!(ParameterStore::read_checkpoint(&b"DYTG0\n"[..]).is_err());
    }
}
