//! In-process message passing between atoms.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    /// Extrapolated primal values of a shared column, sent to the other end of its edge.
    PrimalHat,
    /// Extrapolated coordination duals, sent from copy holders to owners.
    NuHat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub sender: usize,
    pub receiver: usize,
    pub kind: Payload,
    pub round: usize,
    /// (edge index, value)
    pub values: Vec<(usize, f64)>,
}

/// Mailboxes keyed by receiver. Only neighbours may exchange messages.
#[derive(Debug)]
pub struct Transport {
    neighbors: Vec<Vec<usize>>,
    inbox: Vec<Vec<Message>>,
    sent: usize,
}

impl Transport {
    pub fn new(neighbors: Vec<Vec<usize>>) -> Self {
        let n = neighbors.len();
        Transport {
            neighbors,
            inbox: vec![Vec::new(); n],
            sent: 0,
        }
    }

    pub fn send(&mut self, msg: Message) -> Result<()> {
        if self.neighbors[msg.sender].binary_search(&msg.receiver).is_err() {
            return Err(Error::Decomposition(format!(
                "atom {} tried to message non-neighbour {}",
                msg.sender, msg.receiver
            )));
        }
        self.sent += 1;
        self.inbox[msg.receiver].push(msg);
        Ok(())
    }

    /// Drains `receiver`'s mailbox, ordered by sender. Every message must carry
    /// `kind` and the current `round`.
    pub fn receive(&mut self, receiver: usize, kind: Payload, round: usize) -> Result<Vec<Message>> {
        let mut msgs = std::mem::take(&mut self.inbox[receiver]);
        for m in &msgs {
            if m.round != round || m.kind != kind {
                return Err(Error::StaleMessage {
                    expected: round,
                    got: m.round,
                    sender: m.sender,
                });
            }
            if self.neighbors[receiver].binary_search(&m.sender).is_err() {
                return Err(Error::Decomposition(format!(
                    "atom {receiver} received a message from non-neighbour {}",
                    m.sender
                )));
            }
        }
        msgs.sort_by_key(|m| m.sender);
        Ok(msgs)
    }

    pub fn messages_sent(&self) -> usize {
        self.sent
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(sender: usize, receiver: usize, round: usize) -> Message {
        Message {
            sender,
            receiver,
            kind: Payload::PrimalHat,
            round,
            values: vec![(0, 1.0)],
        }
    }

    #[test]
    fn delivers_sorted_by_sender() {
        let mut t = Transport::new(vec![vec![1, 2], vec![0], vec![0]]);
        t.send(msg(2, 0, 5)).unwrap();
        t.send(msg(1, 0, 5)).unwrap();
        let got = t.receive(0, Payload::PrimalHat, 5).unwrap();
        assert_eq!(got.iter().map(|m| m.sender).collect::<Vec<_>>(), vec![1, 2]);
        assert!(t.receive(0, Payload::PrimalHat, 5).unwrap().is_empty());
    }

    #[test]
    fn rejects_non_neighbours_and_stale_rounds() {
        let mut t = Transport::new(vec![vec![1], vec![0], vec![]]);
        assert!(t.send(msg(2, 0, 1)).is_err());
        t.send(msg(1, 0, 3)).unwrap();
        match t.receive(0, Payload::PrimalHat, 4) {
            Err(Error::StaleMessage {
                expected: 4,
                got: 3,
                sender: 1,
            }) => {}
            other => panic!("{other:?}"),
        }
    }
}
