pub mod aggregate;
pub mod checks;
pub mod data;
pub mod dealer;
pub mod error;
pub mod fss;
pub mod gain;
pub mod lut;
pub mod pipeline;
pub mod reference;
pub mod ring;
pub mod sharing;
pub mod trainer;
pub mod transport;

pub use error::{DataError, ProtocolError, RangeError, SetupError};
pub use ring::RingConfig;
pub use sharing::PartyId;
