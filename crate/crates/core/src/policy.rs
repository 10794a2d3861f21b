use crate::error::{invalid, Result};
use crate::grid::UniformGrid;
use crate::problem::{norm, ControlBox};
use crate::scalar::{lit, Scalar};

/// Grid-sampled feedback control `α*(t, y, z)` and adversary `β*(t, y, z)`.
///
/// Arrays are laid out `[t][y][z][component]`. Between nodes both fields are
/// evaluated by trilinear interpolation with clamping to the grid box.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyField<T> {
    pub t_grid: UniformGrid<T>,
    pub y_grid: UniformGrid<T>,
    pub z_grid: UniformGrid<T>,
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    pub control_dim: usize,
    pub noise_dim: usize,
    pub beta_bound: T,
}

impl<T: Scalar> PolicyField<T> {
    pub fn new(
        t_grid: UniformGrid<T>,
        y_grid: UniformGrid<T>,
        z_grid: UniformGrid<T>,
        alpha: Vec<T>,
        beta: Vec<T>,
        (control_dim, noise_dim): (usize, usize),
        beta_bound: T,
    ) -> Result<Self> {
        let nodes = t_grid.len() * y_grid.len() * z_grid.len();
        if alpha.len() != nodes * control_dim || beta.len() != nodes * noise_dim {
            return Err(invalid("policy", "array sizes do not match the grids"));
        }
        let field = Self { t_grid, y_grid, z_grid, alpha, beta, control_dim, noise_dim, beta_bound };
        let slack = beta_bound * lit(1e-12);
        if field.beta.chunks(noise_dim).any(|b| norm(b) > beta_bound + slack) {
            return Err(invalid("policy", format!("adversary exceeds the bound {beta_bound}")));
        }
        Ok(field)
    }

    /// The same `alpha` and `beta` at every node.
    pub fn constant(
        t_grid: UniformGrid<T>,
        y_grid: UniformGrid<T>,
        z_grid: UniformGrid<T>,
        alpha: &[T],
        beta: &[T],
        beta_bound: T,
    ) -> Result<Self> {
        let nodes = t_grid.len() * y_grid.len() * z_grid.len();
        let a: Vec<T> = alpha.iter().copied().cycle().take(nodes * alpha.len()).collect();
        let b: Vec<T> = beta.iter().copied().cycle().take(nodes * beta.len()).collect();
        Self::new(t_grid, y_grid, z_grid, a, b, (alpha.len(), beta.len()), beta_bound)
    }

    pub fn check_controls(&self, controls: &ControlBox<T>) -> Result<()> {
        if self.alpha.chunks(self.control_dim).all(|a| controls.contains(a)) {
            Ok(())
        } else {
            Err(invalid("policy", "control outside the control box"))
        }
    }

    #[inline]
    fn node(&self, it: usize, iy: usize, iz: usize) -> usize {
        (it * self.y_grid.len() + iy) * self.z_grid.len() + iz
    }

    pub fn alpha_node(&self, it: usize, iy: usize, iz: usize) -> &[T] {
        let i = self.node(it, iy, iz) * self.control_dim;
        &self.alpha[i..i + self.control_dim]
    }

    pub fn beta_node(&self, it: usize, iy: usize, iz: usize) -> &[T] {
        let i = self.node(it, iy, iz) * self.noise_dim;
        &self.beta[i..i + self.noise_dim]
    }

    fn interpolate(&self, data: &[T], width: usize, t: T, y: T, z: T, out: &mut [T]) {
        let (i, wt) = self.t_grid.locate(t);
        let (j, wy) = self.y_grid.locate(y);
        let (k, wz) = self.z_grid.locate(z);
        out.iter_mut().for_each(|o| *o = T::zero());
        for (di, ft) in [(0, T::one() - wt), (1, wt)] {
            for (dj, fy) in [(0, T::one() - wy), (1, wy)] {
                for (dk, fz) in [(0, T::one() - wz), (1, wz)] {
                    let w = ft * fy * fz;
                    if w == T::zero() {
                        continue;
                    }
                    let base = self.node(i + di, j + dj, k + dk) * width;
                    for (c, o) in out.iter_mut().enumerate() {
                        *o = *o + w * data[base + c];
                    }
                }
            }
        }
    }

    pub fn alpha_at(&self, t: T, y: T, z: T, out: &mut [T]) {
        self.interpolate(&self.alpha, self.control_dim, t, y, z, out);
    }

    pub fn beta_at(&self, t: T, y: T, z: T, out: &mut [T]) {
        self.interpolate(&self.beta, self.noise_dim, t, y, z, out);
    }

    /// Reflects the control across the centre of `controls` on every node
    /// where `mask(it, iy, iz)` holds.
    pub fn perturbed(&self, controls: &ControlBox<T>, mask: impl Fn(usize, usize, usize) -> bool) -> Self {
        let mut out = self.clone();
        for it in 0..self.t_grid.len() {
            for iy in 0..self.y_grid.len() {
                for iz in 0..self.z_grid.len() {
                    if mask(it, iy, iz) {
                        let base = self.node(it, iy, iz) * self.control_dim;
                        for c in 0..self.control_dim {
                            let a = &mut out.alpha[base + c];
                            *a = controls.lo[c] + controls.hi[c] - *a;
                        }
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grids() -> (UniformGrid<f64>, UniformGrid<f64>, UniformGrid<f64>) {
        (
            UniformGrid::new(0.0, 1.0, 3).unwrap(),
            UniformGrid::new(-1.0, 1.0, 5).unwrap(),
            UniformGrid::new(0.0, 2.0, 3).unwrap(),
        )
    }

    #[test]
    fn constant_policy_interpolates_to_itself() {
        let (t, y, z) = grids();
        let p = PolicyField::constant(t, y, z, &[0.3], &[-1.5], 2.0).unwrap();
        let mut a = [0.0];
        p.alpha_at(0.37, 0.1, 5.0, &mut a);
        assert!((a[0] - 0.3).abs() < 1e-15);
        let mut b = [0.0];
        p.beta_at(-1.0, -3.0, 0.2, &mut b);
        assert!((b[0] + 1.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_bound_adversary() {
        let (t, y, z) = grids();
        assert!(PolicyField::constant(t, y, z, &[0.0], &[3.0], 2.0).is_err());
    }

    #[test]
    fn linear_data_is_reproduced() {
        let (t, y, z) = grids();
        let mut alpha = Vec::new();
        for it in 0..3 {
            for iy in 0..5 {
                for iz in 0..3 {
                    alpha.push(t.node(it) + 2.0 * y.node(iy) - z.node(iz));
                }
            }
        }
        let beta = vec![0.0; alpha.len()];
        let p = PolicyField::new(t, y, z, alpha, beta, (1, 1), 1.0).unwrap();
        let mut a = [0.0];
        p.alpha_at(0.3, 0.25, 1.3, &mut a);
        assert!((a[0] - (0.3 + 0.5 - 1.3)).abs() < 1e-12);
        let flipped = p.perturbed(&ControlBox::interval(-1.0, 1.0), |_, iy, _| iy == 0);
        assert_eq!(flipped.alpha_node(0, 0, 0)[0], -p.alpha_node(0, 0, 0)[0]);
        assert_eq!(flipped.alpha_node(0, 1, 0)[0], p.alpha_node(0, 1, 0)[0]);
    }
}
