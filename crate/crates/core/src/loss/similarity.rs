use std::sync::OnceLock;

use log::warn;

use crate::registry::Registry;
use crate::Result;

/// A non-negative distance between a teacher embedding and a student
/// embedding, with its gradient w.r.t. the student side.
pub trait Similarity: Send + Sync {
    fn name(&self) -> &'static str;

    fn distance(&self, teacher: &[f64], student: &[f64]) -> f64;

    /// Writes `d distance / d student` into `out`.
    fn gradient(&self, teacher: &[f64], student: &[f64], out: &mut [f64]);
}

/// Sum of absolute differences. Subgradient 0 where the entries agree.
#[derive(Debug, Clone, Copy, Default)]
pub struct L1Distance;

impl Similarity for L1Distance {
    fn name(&self) -> &'static str {
        "l1"
    }

    fn distance(&self, teacher: &[f64], student: &[f64]) -> f64 {
        teacher.iter().zip(student).map(|(a, b)| (a - b).abs()).sum()
    }

    fn gradient(&self, teacher: &[f64], student: &[f64], out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(teacher).zip(student) {
            let d = b - a;
            *o = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
    }
}

/// Euclidean norm of the difference.
#[derive(Debug, Clone, Copy, Default)]
pub struct L2Distance;

impl Similarity for L2Distance {
    fn name(&self) -> &'static str {
        "l2"
    }

    fn distance(&self, teacher: &[f64], student: &[f64]) -> f64 {
        teacher
            .iter()
            .zip(student)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn gradient(&self, teacher: &[f64], student: &[f64], out: &mut [f64]) {
        let norm = self.distance(teacher, student);
        for ((o, a), b) in out.iter_mut().zip(teacher).zip(student) {
            *o = if norm > 0.0 { (b - a) / norm } else { 0.0 };
        }
    }
}

/// `1 - cos(teacher, student)`, so minimizing it pulls the vectors into
/// alignment. Defined as 1 when either vector is zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct CosineDistance;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Similarity for CosineDistance {
    fn name(&self) -> &'static str {
        "cosine"
    }

    fn distance(&self, teacher: &[f64], student: &[f64]) -> f64 {
        let (na, nb) = (norm(teacher), norm(student));
        if na == 0.0 || nb == 0.0 {
            warn!("cosine distance with a zero vector; using 1");
            return 1.0;
        }
        let dot: f64 = teacher.iter().zip(student).map(|(a, b)| a * b).sum();
        (1.0 - dot / (na * nb)).max(0.0)
    }

    fn gradient(&self, teacher: &[f64], student: &[f64], out: &mut [f64]) {
        let (na, nb) = (norm(teacher), norm(student));
        if na == 0.0 || nb == 0.0 {
            out.fill(0.0);
            return;
        }
        let dot: f64 = teacher.iter().zip(student).map(|(a, b)| a * b).sum();
        for ((o, a), b) in out.iter_mut().zip(teacher).zip(student) {
            *o = -(a / (na * nb) - dot * b / (na * nb * nb * nb));
        }
    }
}

/// Registry of the built-in similarity kinds: `l1`, `l2`, `cosine`.
pub fn similarity_registry() -> &'static Registry<dyn Similarity> {
    static REGISTRY: OnceLock<Registry<dyn Similarity>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<dyn Similarity> = Registry::new("similarity");
        reg.register("l1", |_| Box::new(L1Distance))
            .register("l2", |_| Box::new(L2Distance))
            .register("cosine", |_| Box::new(CosineDistance));
        reg
    })
}

pub fn similarity(name: &str) -> Result<Box<dyn Similarity>> {
    similarity_registry().create(name, &())
}
