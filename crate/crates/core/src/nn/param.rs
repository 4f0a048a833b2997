use super::Scalar;

/// A named tensor slot. Buffers (running statistics) are stored as
/// non-trainable params so checkpoints see one uniform map.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
    pub trainable: bool,
}

impl<T: Scalar> Param<T> {
    pub fn new(shape: Vec<usize>, value: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![T::zero(); value.len()];
        Self {
            shape,
            value,
            grad,
            trainable: true,
        }
    }

    pub fn buffer(shape: Vec<usize>, value: Vec<T>) -> Self {
        Self {
            trainable: false,
            grad: Vec::new(),
            ..Self::new(shape, value)
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self::new(shape, vec![T::zero(); len])
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

pub type ParamVisitor<'a, T> = dyn FnMut(&str, &Param<T>) + 'a;
pub type ParamVisitorMut<'a, T> = dyn FnMut(&str, &mut Param<T>) + 'a;
