use std::io;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use crate::colstore::SegmentError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{}: {source}", path.display())]
    Segment {
        path: PathBuf,
        #[source]
        source: SegmentError,
    },

    #[error("overlapping CDR intervals for {ip}: [{}, {}) and [{}, {})", a.0, a.1, b.0, b.1)]
    OverlappingIntervals {
        ip: Ipv4Addr,
        a: (u64, u64),
        b: (u64, u64),
    },

    #[error("empty CDR interval for subscriber {subscriber_id} on {ip}: [{start_ms}, {end_ms})")]
    InvalidInterval {
        subscriber_id: u64,
        ip: Ipv4Addr,
        start_ms: u64,
        end_ms: u64,
    },

    #[error("subscriber {0} appears more than once in the CRM table")]
    DuplicateSubscriber(u64),

    #[error("category rule for `{0}` is defined more than once")]
    DuplicateRule(String),

    #[error("invalid category rule suffix `{0}`")]
    InvalidRule(String),

    #[error("chunk {chunk_id} ({} at byte {offset}): {source}", path.display())]
    Chunk {
        chunk_id: usize,
        path: PathBuf,
        offset: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("output directory {} already contains a dataset", .0.display())]
    OutputNotEmpty(PathBuf),

    #[error("no partitions found in the requested range")]
    NoPartitions,

    #[error("unknown instance type `{0}`")]
    UnknownInstance(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn csv(path: impl AsRef<Path>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn segment(path: impl AsRef<Path>, source: SegmentError) -> Self {
        Error::Segment {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// True when the root cause is the filesystem rather than the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv { source, .. } => source.is_io_error(),
            Error::Segment { source, .. } => matches!(source, SegmentError::Io(_)),
            Error::Chunk { source, .. } => source.is_io(),
            _ => false,
        }
    }

    /// Process exit code: 2 for data or validation problems, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        if self.is_io() {
            3
        } else {
            2
        }
    }
}
