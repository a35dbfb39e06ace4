use super::Cube;
use crate::error::{Error, Result};
use crate::field::{FieldRealization, UniformAxis};

/// Minimum grid density, in points per correlation length.
pub const MIN_RESOLUTION: usize = 64;

/// Euler characteristic of `{t in cube : X(t) > u}` from the cubical complex
/// of the thresholded grid (`V - E + F`, 4-connectivity). `resolution` is in
/// grid points per correlation length.
pub fn excursion_euler_grid(
    real: &FieldRealization,
    cube: &Cube,
    u: f64,
    resolution: usize,
) -> Result<i64> {
    let d = real.dim();
    if d > 2 || cube.dim() != d {
        return Err(Error::Capability(format!(
            "grid Euler characteristic needs d <= 2 matching the cube, got {d}"
        )));
    }
    if resolution < MIN_RESOLUTION {
        return Err(Error::Domain(format!(
            "resolution {resolution} is below {MIN_RESOLUTION} points per correlation length"
        )));
    }
    let ell = real.model().correlation_length()?;
    let t = cube.half_width();
    let n = ((2.0 * t / ell * resolution as f64).ceil() as usize).max(1) + 1;
    let axis = UniformAxis::spanning(-t, t, n);
    let above: Vec<bool> = real
        .values_on_grid(&vec![axis; d])
        .into_iter()
        .map(|v| v > u)
        .collect();
    Ok(cubical_euler(&above, &vec![n; d]))
}

/// `V - E + F` of the cubical complex spanned by the marked grid vertices.
pub(crate) fn cubical_euler(above: &[bool], shape: &[usize]) -> i64 {
    match shape {
        [n] => {
            let v = above.iter().filter(|&&a| a).count() as i64;
            let e = (0..n.saturating_sub(1)).filter(|&i| above[i] && above[i + 1]).count() as i64;
            v - e
        }
        [n0, n1] => {
            let at = |i: usize, j: usize| above[i * n1 + j];
            let mut v = 0i64;
            let mut e = 0i64;
            let mut f = 0i64;
            for i in 0..*n0 {
                for j in 0..*n1 {
                    if !at(i, j) {
                        continue;
                    }
                    v += 1;
                    let right = j + 1 < *n1 && at(i, j + 1);
                    let down = i + 1 < *n0 && at(i + 1, j);
                    e += i64::from(right) + i64::from(down);
                    if right && down && at(i + 1, j + 1) {
                        f += 1;
                    }
                }
            }
            v - e + f
        }
        _ => unreachable!("cubical_euler is only used for d <= 2"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_shapes() {
        // full square, annulus, two blobs
        assert_eq!(cubical_euler(&[true; 9], &[3, 3]), 1);
        let ring = [true, true, true, true, false, true, true, true, true];
        assert_eq!(cubical_euler(&ring, &[3, 3]), 0);
        let two = [true, false, true, false, false, false, true, false, false];
        assert_eq!(cubical_euler(&two, &[3, 3]), 3);
        assert_eq!(cubical_euler(&[true, false, true, true], &[4]), 2);
        assert_eq!(cubical_euler(&[false; 4], &[2, 2]), 0);
    }
}
