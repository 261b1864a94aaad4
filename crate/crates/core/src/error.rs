use core::fmt;

/// Errors raised by the fusion engine and the metric suite.
#[derive(Debug, Clone, PartialEq)]
pub enum FusionError {
    /// Two grids that must share a resolution do not.
    ShapeMismatch {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A grid was built from a buffer whose length does not match `width * height`.
    BufferLength { expected: usize, found: usize },
    InvalidIntrinsics(&'static str),
    /// The matrix is not a rigid transform within tolerance.
    NonRigidPose { deviation: f64 },
    InvalidParameter(&'static str),
    /// The oracle mask needs ground truth for the frame.
    MissingGroundTruth { frame: usize },
    /// A provider could not produce its output for a frame.
    Provider { frame: usize, message: alloc::string::String },
    /// Frames must be presented in increasing order starting at 0.
    FrameOrder { expected: usize, found: usize },
    EmptySequence,
    /// Not enough frames for a temporal metric.
    TooFewFrames { needed: usize, found: usize },
    /// No pixel survived the validity tests of a metric.
    NoValidPixels(&'static str),
    /// Scale-shift alignment is undefined for constant predictions.
    DegenerateAlignment,
    /// SSIM needs at least one full window.
    ImageTooSmall { min: usize, width: usize, height: usize },
}

impl fmt::Display for FusionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionError::ShapeMismatch { what, expected, found } => write!(
                f,
                "{what}: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            FusionError::BufferLength { expected, found } => {
                write!(f, "buffer holds {found} values, expected {expected}")
            }
            FusionError::InvalidIntrinsics(msg) => write!(f, "invalid intrinsics: {msg}"),
            FusionError::NonRigidPose { deviation } => {
                write!(f, "pose is not a rigid transform (deviation {deviation:.3e})")
            }
            FusionError::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            FusionError::MissingGroundTruth { frame } => {
                write!(f, "frame {frame}: ground truth depth required")
            }
            FusionError::Provider { frame, message } => write!(f, "frame {frame}: {message}"),
            FusionError::FrameOrder { expected, found } => {
                write!(f, "expected frame {expected}, got frame {found}")
            }
            FusionError::EmptySequence => write!(f, "sequence has no frames"),
            FusionError::TooFewFrames { needed, found } => {
                write!(f, "need at least {needed} frames, found {found}")
            }
            FusionError::NoValidPixels(what) => write!(f, "{what}: no valid pixels"),
            FusionError::DegenerateAlignment => {
                write!(f, "scale-shift alignment is degenerate (constant prediction)")
            }
            FusionError::ImageTooSmall { min, width, height } => {
                write!(f, "image {width}x{height} is smaller than the {min}x{min} window")
            }
        }
    }
}

impl core::error::Error for FusionError {}
