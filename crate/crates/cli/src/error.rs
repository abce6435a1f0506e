use std::fmt;

use synpanel::elicitation::ElicitationError;
use synpanel::metrics::MetricsError;
use synpanel::panelio::PanelIoError;

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_PARTIAL: u8 = 2;
pub const EXIT_IO: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn partial(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_PARTIAL,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<PanelIoError> for CliError {
    fn from(e: PanelIoError) -> Self {
        // Unreadable or unwritable files are IO failures; malformed content
        // is a problem with the inputs the user chose.
        let code = match e {
            PanelIoError::Io { .. } | PanelIoError::Serialize(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<ElicitationError> for CliError {
    fn from(e: ElicitationError) -> Self {
        match e {
            ElicitationError::Io(io) => io.into(),
            ElicitationError::Provider(p) => CliError::partial(format!("provider failure: {p}")),
            other => CliError::config(other.to_string()),
        }
    }
}
