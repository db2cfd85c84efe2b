use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the division engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("division shape does not match configuration: {0}")]
    ShapeMismatch(String),

    #[error("division entry ({cake}, {piece}) is {value}, outside [0, 1]")]
    EntryOutOfRange {
        cake: usize,
        piece: usize,
        value: f64,
    },

    #[error("row {cake} sums to {sum}, expected 1")]
    RowSum { cake: usize, sum: f64 },

    #[error("invalid piece selection: {0}")]
    InvalidSelection(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("predicted size {predicted} exceeds resource cap {cap}")]
    ResourceCap { predicted: u128, cap: u128 },

    #[error("model `{model}` does not support this configuration: {reason}")]
    UnsupportedConfig { model: String, reason: String },

    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),

    #[error("model `{model}` chose {selection} at vertex {vertex}, which contains an empty piece")]
    HungryViolation {
        model: String,
        vertex: usize,
        selection: String,
    },

    #[error("query required for division {0}")]
    QueryRequired(String),

    /// A choice-only player has not answered at `coords / mesh`. With
    /// `confirmation` set, the question re-checks an allocated selection.
    #[error("player {player} must answer at {coords:?}/{mesh}")]
    AnswerNeeded {
        player: String,
        mesh: u32,
        coords: Vec<Vec<u32>>,
        confirmation: bool,
    },

    #[error("answer rejected: {0}")]
    AnswerRejected(String),

    #[error("model `{0}` does not expose utilities")]
    UtilityUnavailable(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}
