//! First-order optimizers behind a common trait, selected by name.

use std::collections::BTreeMap;

use crate::nn::{Param, Scalar};
use crate::registry::Registry;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    pub lr: f64,
    pub weight_decay: f64,
}

/// Named per-parameter state vectors plus the step counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState<T> {
    pub step: u64,
    /// `<slot>.<param name>` -> values
    pub slots: BTreeMap<String, Vec<T>>,
}

pub trait Optimizer<T: Scalar>: Send {
    fn name(&self) -> &'static str;

    /// Called once per optimization step, before the per-parameter updates.
    fn begin_step(&mut self);

    fn update(&mut self, name: &str, param: &mut Param<T>);

    fn state(&self) -> OptimizerState<T>;

    fn load_state(&mut self, state: OptimizerState<T>) -> Result<()>;
}

/// Adam with bias correction and optional L2 weight decay.
pub struct Adam<T> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: u64,
    m: BTreeMap<String, Vec<T>>,
    v: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(settings: &OptimizerSettings) -> Self {
        Self {
            lr: settings.lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: settings.weight_decay,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

impl<T: Scalar> Optimizer<T> for Adam<T> {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn begin_step(&mut self) {
        self.step += 1;
    }

    fn update(&mut self, name: &str, param: &mut Param<T>) {
        let len = param.len();
        let m = self.m.entry(name.to_string()).or_insert_with(|| vec![T::zero(); len]);
        let v = self.v.entry(name.to_string()).or_insert_with(|| vec![T::zero(); len]);
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::lit(1.0 - self.beta1.powi(self.step as i32));
        let c2 = T::lit(1.0 - self.beta2.powi(self.step as i32));
        let (lr, eps, wd) = (T::lit(self.lr), T::lit(self.eps), T::lit(self.weight_decay));
        for i in 0..len {
            let g = param.grad[i] + wd * param.value[i];
            m[i] = b1 * m[i] + (T::one() - b1) * g;
            v[i] = b2 * v[i] + (T::one() - b2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            param.value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }

    fn state(&self) -> OptimizerState<T> {
        let mut slots = BTreeMap::new();
        for (k, val) in &self.m {
            slots.insert(format!("m.{k}"), val.clone());
        }
        for (k, val) in &self.v {
            slots.insert(format!("v.{k}"), val.clone());
        }
        OptimizerState { step: self.step, slots }
    }

    fn load_state(&mut self, state: OptimizerState<T>) -> Result<()> {
        self.step = state.step;
        self.m.clear();
        self.v.clear();
        for (k, val) in state.slots {
            match k.split_once('.') {
                Some(("m", name)) => self.m.insert(name.to_string(), val),
                Some(("v", name)) => self.v.insert(name.to_string(), val),
                _ => return Err(Error::Format(format!("unexpected adam state slot `{k}`"))),
            };
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum 0.9.
pub struct Sgd<T> {
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    step: u64,
    velocity: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(settings: &OptimizerSettings) -> Self {
        Self {
            lr: settings.lr,
            momentum: 0.9,
            weight_decay: settings.weight_decay,
            step: 0,
            velocity: BTreeMap::new(),
        }
    }
}

impl<T: Scalar> Optimizer<T> for Sgd<T> {
    fn name(&self) -> &'static str {
        "sgd"
    }

    fn begin_step(&mut self) {
        self.step += 1;
    }

    fn update(&mut self, name: &str, param: &mut Param<T>) {
        let len = param.len();
        let vel = self.velocity.entry(name.to_string()).or_insert_with(|| vec![T::zero(); len]);
        let (mu, lr, wd) = (T::lit(self.momentum), T::lit(self.lr), T::lit(self.weight_decay));
        for i in 0..len {
            let g = param.grad[i] + wd * param.value[i];
            vel[i] = mu * vel[i] + g;
            param.value[i] -= lr * vel[i];
        }
    }

    fn state(&self) -> OptimizerState<T> {
        OptimizerState {
            step: self.step,
            slots: self.velocity.iter().map(|(k, v)| (format!("velocity.{k}"), v.clone())).collect(),
        }
    }

    fn load_state(&mut self, state: OptimizerState<T>) -> Result<()> {
        self.step = state.step;
        self.velocity.clear();
        for (k, val) in state.slots {
            let name = k
                .strip_prefix("velocity.")
                .ok_or_else(|| Error::Format(format!("unexpected sgd state slot `{k}`")))?;
            self.velocity.insert(name.to_string(), val);
        }
        Ok(())
    }
}

/// `adam` and `sgd`.
pub fn optimizer_registry<T: Scalar>() -> Registry<dyn Optimizer<T>, OptimizerSettings> {
    let mut reg: Registry<dyn Optimizer<T>, OptimizerSettings> = Registry::new("optimizer");
    reg.register("adam", |s| Box::new(Adam::<T>::new(s)))
        .register("sgd", |s| Box::new(Sgd::<T>::new(s)));
    reg
}
