//! The federated protocol: clients register entity labels, the server
//! distributes entity rows, selected clients train locally, and the server
//! averages each entity over the clients that hold it.

mod client;
mod message;
mod round;
mod server;
mod table;

pub use client::ClientState;
pub use message::Message;
pub use round::{FedRun, FedSnapshot, RoundConfig, RoundReport};
pub use server::{aggregate, clients_per_round, ServerState};
pub use table::EntityTable;
