use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// Fewer than three cells along an axis: with periodic wrap a cell would
    /// be its own neighbour.
    MeshTooSmall { nx: usize, ny: usize },
    InvalidDomain { lx: f64, ly: f64 },
    InvalidParameter {
        name: &'static str,
        constraint: &'static str,
        value: f64,
    },
    /// A density was zero or negative where the pressure law is evaluated.
    /// `cell` is `None` for pointwise evaluations.
    NonPositiveDensity { cell: Option<usize>, value: f64 },
    /// A velocity component is infinite or NaN.
    NonFiniteVelocity { cell: usize },
    SizeMismatch { expected: usize, found: usize },
    NonNestedGrids,
    ZeroPivot { row: usize },
    NewtonNotConverged { iterations: usize, residual: f64 },
    /// Backtracking could not keep the density iterate positive.
    PositivityLost { iterations: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::MeshTooSmall { nx, ny } => write!(
                f,
                "periodic mesh needs at least 3 cells per axis, got {nx}x{ny}"
            ),
            Error::InvalidDomain { lx, ly } => {
                write!(f, "domain lengths must be positive, got {lx}x{ly}")
            }
            Error::InvalidParameter {
                name,
                constraint,
                value,
            } => write!(f, "parameter {name} = {value} violates {constraint}"),
            Error::NonPositiveDensity {
                cell: Some(cell),
                value,
            } => write!(f, "non-positive density {value} in cell {cell}"),
            Error::NonPositiveDensity { cell: None, value } => {
                write!(f, "non-positive density {value}")
            }
            Error::NonFiniteVelocity { cell } => write!(f, "non-finite velocity in cell {cell}"),
            Error::SizeMismatch { expected, found } => {
                write!(f, "field has {found} entries, mesh expects {expected}")
            }
            Error::NonNestedGrids => write!(
                f,
                "fine grid is not an integer refinement of the coarse grid"
            ),
            Error::ZeroPivot { row } => write!(f, "zero pivot in banded LU at row {row}"),
            Error::NewtonNotConverged {
                iterations,
                residual,
            } => write!(
                f,
                "density solve did not converge after {iterations} iterations (residual {residual:e})"
            ),
            Error::PositivityLost { iterations } => write!(
                f,
                "density solve lost positivity at iteration {iterations} after all damping"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
