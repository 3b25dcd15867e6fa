//! Network effects, social welfare and incentive mechanisms for markets in
//! which clients either train a federated model, buy it, or stay out.

pub mod dynamics;
pub mod error;
pub mod fixtures;
pub mod mechanism;
pub mod oracle;
pub mod performance;
pub mod report;
pub mod scenario;
pub mod sweep;
pub mod welfare;

pub use error::{Error, Result};
pub use mechanism::{Decision, Mechanism, MechanismKind, MechanismQuote};
pub use performance::Profile;
pub use scenario::{load_scenario, ClientType, Scenario, UtilitySpec};
pub use welfare::{SocialState, WelfareReport};
