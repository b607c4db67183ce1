use crate::diff::Tensor;

/// Hidden-unit degrees `k mod dim`. Degree-0 units see only the context.
pub fn hidden_degrees(dim: usize, hidden: usize) -> Vec<usize> {
    (0..hidden).map(|k| k % dim).collect()
}

/// Connectivity masks of one MADE conditioner.
///
/// Inputs are `[u_0 .. u_{D-1}, context embedding]`; input `u_j` has degree
/// `j + 1`. Outputs are the shifts `t_0..t_{D-1}` followed by the raw
/// log-scales, and output `i` has degree `i + 1`, so both may depend only on
/// `u_j` with `j < i`.
#[derive(Clone, Debug)]
pub struct MadeMasks {
    pub input: Tensor,
    pub hidden: Tensor,
    pub output: Tensor,
}

impl MadeMasks {
    pub fn new(dim: usize, embedding: usize, hidden: usize) -> Self {
        let deg = hidden_degrees(dim, hidden);
        let input = Tensor::from_fn(dim + embedding, hidden, |j, k| {
            if j >= dim || deg[k] > j {
                1.0
            } else {
                0.0
            }
        });
        let hidden_mask =
            Tensor::from_fn(hidden, hidden, |k, k2| if deg[k2] >= deg[k] { 1.0 } else { 0.0 });
        let output = Tensor::from_fn(hidden, 2 * dim, |k, c| {
            let i = c % dim;
            if deg[k] <= i {
                1.0
            } else {
                0.0
            }
        });
        MadeMasks {
            input,
            hidden: hidden_mask,
            output,
        }
    }

    /// Boolean reachability from input coordinate `j` to output coordinate
    /// `i` through the masked network.
    pub fn connects(&self, dim: usize, j: usize, i: usize) -> bool {
        let hidden = self.hidden.rows();
        (0..hidden).any(|k1| {
            self.input.get(j, k1) > 0.0
                && (0..hidden).any(|k2| {
                    self.hidden.get(k1, k2) > 0.0
                        && (self.output.get(k2, i) > 0.0 || self.output.get(k2, dim + i) > 0.0)
                })
        })
    }
}
