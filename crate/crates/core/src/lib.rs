pub mod actors;
pub mod chain;
pub mod cli;
pub mod codec;
pub mod contract;
pub mod crypto;
pub mod harness;
pub mod light_client;
pub mod pricing;
pub mod report;
