use crate::kg::Labels;
use crate::{Error, Result};

/// The server's global entity table.
///
/// `maps[c][j]` is the global position of client `c`'s local entity `j`
/// (the column-wise nonzero of the client's permutation matrix);
/// `masks[c][i]` marks global entities the client holds (its existence vector).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityTable {
    pub entities: Labels,
    pub maps: Vec<Vec<u32>>,
    pub masks: Vec<Vec<bool>>,
}

impl EntityTable {
    /// Union of client entity label lists in client order, then local order.
    pub fn build<S: AsRef<str>>(clients: &[Vec<S>]) -> Result<Self> {
        if clients.is_empty() {
            return Err(Error::contract("entity table needs at least one client"));
        }
        let mut entities = Labels::new();
        let mut maps = Vec::with_capacity(clients.len());
        for (c, labels) in clients.iter().enumerate() {
            if labels.is_empty() {
                return Err(Error::contract(format!("client {c} registered no entities")));
            }
            let map: Vec<u32> = labels.iter().map(|l| entities.intern(l.as_ref())).collect();
            let mut sorted = map.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::contract(format!("client {c} registered a label twice")));
            }
            maps.push(map);
        }
        let n = entities.len();
        let masks = maps
            .iter()
            .map(|map| {
                let mut mask = vec![false; n];
                for &i in map {
                    mask[i as usize] = true;
                }
                mask
            })
            .collect();
        Ok(EntityTable { entities, maps, masks })
    }

    pub fn num_clients(&self) -> usize {
        self.maps.len()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn map(&self, client: usize) -> Result<&[u32]> {
        self.maps
            .get(client)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::contract(format!("unknown client {client}")))
    }
}
