//! A deterministic in-memory deployment: one controller, one agent per peer
//! role, a virtual clock and a datagram queue that tests can observe and
//! tamper with.

use std::collections::{BTreeMap, VecDeque};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::time::Duration;

use ibn_core::crypto::StaticKeypair;
use ibn_core::pki::{ca_init, enrollment_token, Certificate, EnrollmentRequest, StakeholderRole};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::agent::{Agent, AgentEvent, AgentSettings};
use crate::controller::{Controller, ControllerSettings};
use crate::time::Now;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Controller,
    Agent(StakeholderRole),
    /// An address no simulated node owns; datagrams sent there are collected.
    Stray(SocketAddr),
}

#[derive(Debug, Clone)]
pub struct Datagram {
    pub from: SocketAddr,
    pub to: Endpoint,
    pub bytes: Vec<u8>,
}

/// What the network does with a datagram in flight.
pub enum Verdict {
    Deliver,
    Drop,
    Replace(Vec<u8>),
}

type Tap = Box<dyn FnMut(&Datagram) -> Verdict>;

pub struct Sim {
    pub now: Now,
    pub controller: Controller,
    pub agents: BTreeMap<StakeholderRole, Agent>,
    pub certificates: BTreeMap<StakeholderRole, Certificate>,
    pub master: [u8; 32],
    pub rng: ChaCha20Rng,
    queue: VecDeque<Datagram>,
    /// Every datagram handed to the network, in order.
    pub wire: Vec<Datagram>,
    pub stray: Vec<Datagram>,
    pub events: Vec<(StakeholderRole, AgentEvent)>,
    tap: Option<Tap>,
}

pub const CONTROLLER_ADDR: SocketAddr = SocketAddr::new(IpAddr::V4(Ipv4Addr::new(10, 0, 0, 1)), 51820);

pub fn agent_addr(role: StakeholderRole) -> SocketAddr {
    SocketAddr::new(IpAddr::V4(Ipv4Addr::new(10, 0, 0, 10 + role.code())), 40000)
}

impl Sim {
    /// Builds and enrolls a full deployment. Agents are not connected yet.
    pub fn new(seed: u64, controller_settings: ControllerSettings, agent_settings: AgentSettings) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut bytes = || {
            let mut b = [0u8; 32];
            rng.fill_bytes(&mut b);
            b
        };
        let now = Now { instant: std::time::Instant::now(), wall: Duration::from_secs(1_800_000_000) };
        let master = bytes();
        let mut controller =
            Controller::new(StaticKeypair::from_entropy(bytes()), ca_init(bytes()), master, controller_settings, bytes());
        controller.ensure_own_certificate(now).expect("controller certificate");
        let ctl_pub = *controller.static_public();
        let mut agents = BTreeMap::new();
        let mut certificates = BTreeMap::new();
        for role in StakeholderRole::PEERS {
            let key = StaticKeypair::from_entropy(bytes());
            let req = EnrollmentRequest::new(role, *key.public(), now.unix(), &enrollment_token(&master, role));
            let cert = controller.enroll(&req, now, None).expect("enrollment");
            certificates.insert(role, cert);
            agents.insert(role, Agent::new(role, key, ctl_pub, agent_settings.clone(), bytes()));
        }
        let rng = ChaCha20Rng::from_seed(bytes());
        Self {
            now,
            controller,
            agents,
            certificates,
            master,
            rng,
            queue: VecDeque::new(),
            wire: Vec::new(),
            stray: Vec::new(),
            events: Vec::new(),
            tap: None,
        }
    }

    pub fn set_tap(&mut self, tap: impl FnMut(&Datagram) -> Verdict + 'static) {
        self.tap = Some(Box::new(tap));
    }

    pub fn clear_tap(&mut self) {
        self.tap = None;
    }

    pub fn agent(&mut self, role: StakeholderRole) -> &mut Agent {
        self.agents.get_mut(&role).expect("simulated role")
    }

    fn endpoint_of(addr: SocketAddr) -> Endpoint {
        StakeholderRole::PEERS
            .into_iter()
            .find(|r| agent_addr(*r) == addr)
            .map_or(Endpoint::Stray(addr), Endpoint::Agent)
    }

    pub fn send_from_agent(&mut self, role: StakeholderRole, packets: Vec<Vec<u8>>) {
        for bytes in packets {
            self.push(Datagram { from: agent_addr(role), to: Endpoint::Controller, bytes });
        }
    }

    /// Injects a datagram to the controller from an arbitrary source.
    pub fn inject(&mut self, from: SocketAddr, bytes: Vec<u8>) {
        self.push(Datagram { from, to: Endpoint::Controller, bytes });
    }

    fn push(&mut self, d: Datagram) {
        self.wire.push(d.clone());
        self.queue.push_back(d);
    }

    pub fn connect(&mut self, role: StakeholderRole) {
        let now = self.now;
        let out = self.agent(role).connect(now);
        self.send_from_agent(role, out);
    }

    pub fn connect_all(&mut self) {
        for role in StakeholderRole::PEERS {
            self.connect(role);
        }
        self.settle();
    }

    /// Delivers queued datagrams (and everything they trigger) at the current
    /// instant. Returns how many were delivered.
    pub fn settle(&mut self) -> usize {
        let mut n = 0;
        while let Some(mut d) = self.queue.pop_front() {
            if let Some(tap) = self.tap.as_mut() {
                match tap(&d) {
                    Verdict::Deliver => {}
                    Verdict::Drop => continue,
                    Verdict::Replace(b) => d.bytes = b,
                }
            }
            n += 1;
            let now = self.now;
            match d.to {
                Endpoint::Controller => {
                    for (to, bytes) in self.controller.handle_datagram(&d.bytes, d.from, now) {
                        self.push(Datagram { from: CONTROLLER_ADDR, to: Self::endpoint_of(to), bytes });
                    }
                }
                Endpoint::Agent(role) => {
                    let out = self.agent(role).handle_datagram(&d.bytes, now);
                    self.send_from_agent(role, out);
                }
                Endpoint::Stray(_) => self.stray.push(d),
            }
        }
        self.collect_events();
        n
    }

    fn collect_events(&mut self) {
        for (role, a) in self.agents.iter_mut() {
            self.events.extend(a.take_events().into_iter().map(|e| (*role, e)));
        }
    }

    /// Polls every node once at the current instant, then settles.
    pub fn tick(&mut self) {
        let now = self.now;
        for (to, bytes) in self.controller.poll(now) {
            self.push(Datagram { from: CONTROLLER_ADDR, to: Self::endpoint_of(to), bytes });
        }
        let roles: Vec<_> = self.agents.keys().copied().collect();
        for role in roles {
            let out = self.agent(role).poll(now);
            self.send_from_agent(role, out);
        }
        self.settle();
    }

    /// Advances the clock in `step` increments for `total`, ticking each time.
    pub fn run_for(&mut self, total: Duration, step: Duration) {
        let mut elapsed = Duration::ZERO;
        while elapsed < total {
            self.now = self.now.advance(step);
            elapsed += step;
            self.tick();
        }
    }

    pub fn advance(&mut self, d: Duration) {
        self.now = self.now.advance(d);
    }
}
