//! Privacy-aware joint source-channel coding over the binary symmetric
//! wiretap channel.

pub mod autodiff;
pub mod channel;
pub mod source;
pub mod mi;
pub mod models;
pub mod training;
pub mod evaluation;
pub mod oracle;
