use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("simplex {simplex}: vertex index {index} out of range (vertex count {count})")]
    IndexOutOfRange {
        simplex: usize,
        index: usize,
        count: usize,
    },

    #[error("simplex {simplex} repeats vertex {vertex}")]
    RepeatedVertex { simplex: usize, vertex: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    #[error("non-manifold facet {facet:?} shared by {count} simplices")]
    NonManifoldFacet { facet: Vec<usize>, count: usize },

    #[error("degenerate simplex {0}")]
    DegenerateSimplex(usize),

    #[error("image of simplex {0} is collapsed")]
    CollapsedImage(usize),

    #[error("simplex {simplex} has non-positive density or mass {value}")]
    InvalidMass { simplex: usize, value: f64 },

    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("singular linear system (condition estimate {cond:.3e})")]
    Singular { cond: f64 },

    #[error("boundary vertex data is rank deficient (singular value ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("topology: {0}")]
    Topology(String),

    #[error("no stereographic point lies inside radius {radius}")]
    EmptyInterior { radius: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// Innermost error, with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by the input (files, parameters, topology)
    /// rather than by a numerical failure during a solve.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self.root(),
            Error::IndexOutOfRange { .. }
                | Error::RepeatedVertex { .. }
                | Error::DimensionMismatch(_)
                | Error::UnsupportedDimension(_)
                | Error::NonManifoldFacet { .. }
                | Error::DegenerateSimplex(_)
                | Error::InvalidMass { .. }
                | Error::Format { .. }
                | Error::Io(_)
                | Error::RankDeficient { .. }
                | Error::Topology(_)
                | Error::InvalidParameter(_)
        )
    }
}
