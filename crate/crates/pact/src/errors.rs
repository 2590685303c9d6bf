//! Maps library errors onto the process exit-code contract:
//! 1 = configuration/input error, 2 = numerical blow-up or loss of
//! validity, 3 = infeasible calibration target.

use principal_agent::burgers::BurgersError;
use principal_agent::contract::ContractError;
use principal_agent::model::ModelError;
use principal_agent::ode::OdeError;
use principal_agent::riccati::RiccatiError;
use principal_agent::simulate::SimulateError;

/// A command failure with its exit classification.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration, unusable inputs, or I/O trouble → exit 1.
    Config(String),
    /// The computation itself lost validity (blow-up, non-finite state,
    /// positivity loss) → exit 2.
    Numerical(String),
    /// A well-posed run whose calibration target cannot be met → exit 3.
    Infeasible(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Infeasible(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) | Failure::Infeasible(m) => m,
        }
    }

    /// Prefixes the message with a context clause.
    pub fn context(self, ctx: &str) -> Self {
        let wrap = |m: String| format!("{ctx}: {m}");
        match self {
            Failure::Config(m) => Failure::Config(wrap(m)),
            Failure::Numerical(m) => Failure::Numerical(wrap(m)),
            Failure::Infeasible(m) => Failure::Infeasible(wrap(m)),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("I/O error: {e}"))
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<OdeError> for Failure {
    fn from(e: OdeError) -> Self {
        match e {
            OdeError::BlowUp { .. } | OdeError::NonFinite { .. } => {
                Failure::Numerical(e.to_string())
            }
            OdeError::InvalidGrid(_) => Failure::Config(e.to_string()),
        }
    }
}

impl From<RiccatiError> for Failure {
    fn from(e: RiccatiError) -> Self {
        match e {
            RiccatiError::Ode(inner) => inner.into(),
            RiccatiError::Model(inner) => inner.into(),
            RiccatiError::CflViolation { .. } => Failure::Config(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<SimulateError> for Failure {
    fn from(e: SimulateError) -> Self {
        match e {
            SimulateError::NonFinite { .. } => Failure::Numerical(e.to_string()),
            SimulateError::Riccati(inner) => inner.into(),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<ContractError> for Failure {
    fn from(e: ContractError) -> Self {
        match e {
            ContractError::NotBracketed { .. }
            | ContractError::NotConverged { .. }
            | ContractError::ThresholdBelowWc { .. }
            | ContractError::Infeasible { .. } => Failure::Infeasible(e.to_string()),
            ContractError::Simulate(inner) => inner.into(),
            ContractError::Riccati(inner) => inner.into(),
            ContractError::Model(inner) => inner.into(),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<BurgersError> for Failure {
    fn from(e: BurgersError) -> Self {
        match e {
            BurgersError::QuadratureDomain { .. } | BurgersError::NonPositiveV { .. } => {
                Failure::Numerical(e.to_string())
            }
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Config(format!("JSON error: {e}"))
    }
}
