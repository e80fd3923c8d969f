use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Leaky ReLU with configurable negative slope (default 0.01).
#[derive(Debug, Clone)]
pub struct LeakyRelu {
    pub slope: f32,
    saved_input: Option<Tensor>,
}

impl LeakyRelu {
    pub fn new(slope: f32) -> Self {
        LeakyRelu {
            slope,
            saved_input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, save: bool) -> Tensor {
        let slope = self.slope;
        let mut out = x.clone();
        for v in out.data_mut() {
            if *v < 0.0 {
                *v *= slope;
            }
        }
        self.saved_input = if save { Some(x.clone()) } else { None };
        out
    }

    pub fn backward(&mut self, dout: &Tensor) -> Result<Tensor> {
        let x = self
            .saved_input
            .take()
            .ok_or_else(|| Error::State("leaky_relu backward without saved forward context".into()))?;
        let mut dx = dout.clone();
        for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
            if v < 0.0 {
                *d *= self.slope;
            }
        }
        Ok(dx)
    }
}

impl Default for LeakyRelu {
    fn default() -> Self {
        LeakyRelu::new(0.01)
    }
}
