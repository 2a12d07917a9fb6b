use crate::error::{Error, Result};
use crate::nn::{DenseMatrix, LayerGrads, ParamGrads};

/// Shapes of a network's parameter tensors, per layer `(weight, bias)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub owner: String,
    pub layers: Vec<((usize, usize), (usize, usize))>,
}

impl Layout {
    pub fn of(grads: &ParamGrads) -> Self {
        Self {
            owner: grads.owner.clone(),
            layers: grads
                .layers
                .iter()
                .map(|l| (l.weight.shape(), l.bias.shape()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|((wr, wc), (br, bc))| wr * wc + br * bc)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Concatenates gradients in layer order, weights (row-major) before biases.
pub fn flatten(grads: &ParamGrads) -> Vec<f64> {
    let mut out = Vec::with_capacity(grads.num_params());
    for t in grads.tensors() {
        out.extend_from_slice(t.as_slice());
    }
    out
}

pub fn unflatten(flat: &[f64], layout: &Layout) -> Result<ParamGrads> {
    if flat.len() != layout.len() {
        return Err(Error::shape(format!(
            "flat vector has {} entries, layout of {} needs {}",
            flat.len(),
            layout.owner,
            layout.len()
        )));
    }
    let mut offset = 0;
    let mut take = |(r, c): (usize, usize)| {
        let m = DenseMatrix::from_vec(r, c, flat[offset..offset + r * c].to_vec());
        offset += r * c;
        m
    };
    let mut layers = Vec::with_capacity(layout.layers.len());
    for &(w, b) in &layout.layers {
        let weight = take(w)?;
        let bias = take(b)?;
        layers.push(LayerGrads { weight, bias });
    }
    Ok(ParamGrads {
        owner: layout.owner.clone(),
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> ParamGrads {
        ParamGrads {
            owner: "t".into(),
            layers: vec![LayerGrads {
                weight: DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(),
                bias: DenseMatrix::row_vector(vec![5.0, 6.0]).unwrap(),
            }],
        }
    }

    #[test]
    fn row_major_weights_then_bias() {
        assert_eq!(flatten(&two_by_two()), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn layer_order_is_preserved() {
        let mut g = two_by_two();
        g.layers.push(LayerGrads {
            weight: DenseMatrix::from_rows(&[vec![7.0], vec![8.0]]).unwrap(),
            bias: DenseMatrix::row_vector(vec![9.0]).unwrap(),
        });
        assert_eq!(
            flatten(&g),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]
        );
        let back = unflatten(&flatten(&g), &Layout::of(&g)).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let g = two_by_two();
        assert!(matches!(
            unflatten(&[1.0, 2.0], &Layout::of(&g)),
            Err(Error::Shape(_))
        ));
    }
}
