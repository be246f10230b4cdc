use std::fmt;

use crate::io::DataError;

/// Process outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Artifacts were written but some solve hit its iteration cap.
    NotConverged,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::NotConverged => 3,
        }
    }

    pub fn from_converged(converged: bool) -> Status {
        if converged {
            Status::Ok
        } else {
            Status::NotConverged
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Solver(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Solver(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Solver(m) => f.write_str(m),
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(format!("i/o error: {e}"))
    }
}

impl From<sqr::Error> for Failure {
    fn from(e: sqr::Error) -> Self {
        use sqr::Error as E;
        let msg = e.to_string();
        match e.root() {
            E::InvalidParameter(_) | E::NonUniformKernel(_) | E::AllUnpenalized | E::EmptySupport => {
                Failure::Usage(msg)
            }
            E::InvalidData(_) | E::DimensionMismatch { .. } => Failure::Data(msg),
            _ => Failure::Solver(msg),
        }
    }
}
