//! Bundled example markets.

use crate::scenario::Scenario;

pub const S1_JSON: &str = include_str!("../fixtures/s1.json");
pub const S2_JSON: &str = include_str!("../fixtures/s2.json");
pub const MNIST_LIKE_JSON: &str = include_str!("../fixtures/mnist_like.json");
pub const CIFAR_LIKE_JSON: &str = include_str!("../fixtures/cifar_like.json");

fn parse(text: &str) -> Scenario {
    Scenario::from_json(text).expect("bundled fixture is valid")
}

/// One type of three identical clients.
pub fn s1() -> Scenario {
    parse(S1_JSON)
}

/// Two equally sized types, the second far more expensive.
pub fn s2() -> Scenario {
    parse(S2_JSON)
}

/// Twenty clients over three data sizes, homogeneous data.
pub fn mnist_like() -> Scenario {
    parse(MNIST_LIKE_JSON)
}

/// Same market shape with larger data and heterogeneous clients.
pub fn cifar_like() -> Scenario {
    parse(CIFAR_LIKE_JSON)
}
