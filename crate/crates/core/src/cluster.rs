//! Servers, partitions and per-server FIFO queues.
//!
//! Each server runs one task at a time. The cluster keeps the long-load
//! counters (`n_total`, `n_long`) incrementally; [`Cluster::recount`] is the
//! full-scan version used to check them.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::simcore::{ServerId, SimTime, TaskIdx};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    OnDemand,
    Transient,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::OnDemand => "on_demand",
            Provenance::Transient => "transient",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    General,
    ShortOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServerState {
    Provisioning,
    Active,
    Draining,
    Retired,
}

/// A task as a server sees it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaskRef {
    pub task: TaskIdx,
    pub duration: SimTime,
    pub long: bool,
    pub attempt: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Running {
    pub task: TaskRef,
    pub started: SimTime,
}

#[derive(Clone, Debug)]
pub struct Server {
    pub id: ServerId,
    pub provenance: Provenance,
    pub partition: Partition,
    pub state: ServerState,
    queue: VecDeque<TaskRef>,
    running: Option<Running>,
    busy_until: SimTime,
    queued_work: SimTime,
    long_tasks: u32,
    pub requested_at: SimTime,
    pub provisioned_at: Option<SimTime>,
    pub retired_at: Option<SimTime>,
    pub revoked: bool,
}

impl Server {
    fn new(
        id: ServerId,
        provenance: Provenance,
        partition: Partition,
        state: ServerState,
        now: SimTime,
    ) -> Self {
        let active = state == ServerState::Active;
        Server {
            id,
            provenance,
            partition,
            state,
            queue: VecDeque::new(),
            running: None,
            busy_until: now,
            queued_work: SimTime::ZERO,
            long_tasks: 0,
            requested_at: now,
            provisioned_at: active.then_some(now),
            retired_at: None,
            revoked: false,
        }
    }

    pub fn running(&self) -> Option<&Running> {
        self.running.as_ref()
    }

    pub fn queue(&self) -> impl Iterator<Item = &TaskRef> {
        self.queue.iter()
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_idle(&self) -> bool {
        self.running.is_none() && self.queue.is_empty()
    }

    /// Work still ahead of a newly enqueued task.
    pub fn remaining_work(&self, now: SimTime) -> SimTime {
        let running = if self.running.is_some() {
            self.busy_until.saturating_sub(now)
        } else {
            SimTime::ZERO
        };
        running + self.queued_work
    }

    /// True if a long task is running or queued here.
    pub fn has_long_task(&self) -> bool {
        self.long_tasks > 0
    }

    pub fn lifetime(&self) -> Option<SimTime> {
        Some(self.retired_at? - self.provisioned_at?)
    }
}

/// Static shape of the cluster at time zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterLayout {
    pub general_on_demand: u32,
    pub short_on_demand: u32,
    /// Let draining servers count toward `n_total`.
    pub count_draining_in_total: bool,
}

/// Returned by [`Cluster::enqueue_task`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Enqueued {
    pub predicted_start: SimTime,
    /// The server was idle and the task now occupies it; a `TaskStart`
    /// must be scheduled at `now`.
    pub started: bool,
}

/// Per-server state as observed at one instant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ServerView {
    pub id: ServerId,
    pub partition: Partition,
    pub provenance: Provenance,
    pub state: ServerState,
    pub queue_len: usize,
    pub remaining_work: SimTime,
    pub has_long_task: bool,
}

/// Read access used by placement.
pub trait ClusterView {
    fn now(&self) -> SimTime;
    /// Active general-partition servers, ascending id.
    fn general_servers(&self) -> &[ServerId];
    /// Active short-only servers accepting tasks, ascending id.
    fn short_servers(&self) -> &[ServerId];
    fn remaining_work(&self, id: ServerId) -> SimTime;
    fn has_long_task(&self, id: ServerId) -> bool;
    fn provenance(&self, id: ServerId) -> Provenance;
}

/// Immutable copy of the cluster state, safe to hand to any observer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterSnapshot {
    pub now: SimTime,
    pub servers: Vec<ServerView>,
    pub general: Vec<ServerId>,
    pub short: Vec<ServerId>,
    pub n_total: u32,
    pub n_long: u32,
}

impl ClusterSnapshot {
    /// Builds a snapshot from hand-written views. Views must be indexed by id.
    pub fn from_views(
        now: SimTime,
        servers: Vec<ServerView>,
        count_draining_in_total: bool,
    ) -> Self {
        for (i, s) in servers.iter().enumerate() {
            assert_eq!(s.id.index(), i, "views must be indexed by server id");
        }
        let counted = |s: &ServerView| {
            s.state == ServerState::Active
                || (count_draining_in_total && s.state == ServerState::Draining)
        };
        let pick = |p: Partition| {
            servers
                .iter()
                .filter(|s| s.partition == p && s.state == ServerState::Active)
                .map(|s| s.id)
                .collect()
        };
        ClusterSnapshot {
            now,
            general: pick(Partition::General),
            short: pick(Partition::ShortOnly),
            n_total: servers.iter().filter(|s| counted(s)).count() as u32,
            n_long: servers
                .iter()
                .filter(|s| counted(s) && s.has_long_task)
                .count() as u32,
            servers,
        }
    }
}

impl ClusterView for ClusterSnapshot {
    fn now(&self) -> SimTime {
        self.now
    }
    fn general_servers(&self) -> &[ServerId] {
        &self.general
    }
    fn short_servers(&self) -> &[ServerId] {
        &self.short
    }
    fn remaining_work(&self, id: ServerId) -> SimTime {
        self.servers[id.index()].remaining_work
    }
    fn has_long_task(&self, id: ServerId) -> bool {
        self.servers[id.index()].has_long_task
    }
    fn provenance(&self, id: ServerId) -> Provenance {
        self.servers[id.index()].provenance
    }
}

/// Counts of transient servers by lifecycle stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TransientCounts {
    pub pending: u32,
    /// Provisioned and not yet retired, draining included.
    pub active: u32,
    pub draining: u32,
}

#[derive(Clone, Copy, PartialEq, Eq)]
struct Contribution {
    counted: bool,
    long: bool,
    short_accepting: bool,
    transient_state: Option<ServerState>,
}

#[derive(Debug)]
pub struct Cluster {
    servers: Vec<Server>,
    general: Vec<ServerId>,
    short: Vec<ServerId>,
    count_draining_in_total: bool,
    n_total: u32,
    n_long: u32,
    transient: TransientCounts,
}

impl Cluster {
    pub fn new(layout: &ClusterLayout) -> Self {
        let mut c = Cluster {
            servers: Vec::new(),
            general: Vec::new(),
            short: Vec::new(),
            count_draining_in_total: layout.count_draining_in_total,
            n_total: 0,
            n_long: 0,
            transient: TransientCounts::default(),
        };
        for _ in 0..layout.general_on_demand {
            c.add_server(
                Provenance::OnDemand,
                Partition::General,
                ServerState::Active,
                SimTime::ZERO,
            );
        }
        for _ in 0..layout.short_on_demand {
            c.add_server(
                Provenance::OnDemand,
                Partition::ShortOnly,
                ServerState::Active,
                SimTime::ZERO,
            );
        }
        c
    }

    fn contribution(&self, s: &Server) -> Contribution {
        let counted = s.state == ServerState::Active
            || (self.count_draining_in_total && s.state == ServerState::Draining);
        Contribution {
            counted,
            long: counted && s.has_long_task(),
            short_accepting: s.partition == Partition::ShortOnly && s.state == ServerState::Active,
            transient_state: (s.provenance == Provenance::Transient).then_some(s.state),
        }
    }

    fn apply(&mut self, id: ServerId, c: Contribution, sign: i32) {
        let add = |v: &mut u32, on: bool| {
            if on {
                *v = (*v as i64 + sign as i64) as u32;
            }
        };
        add(&mut self.n_total, c.counted);
        add(&mut self.n_long, c.long);
        match c.transient_state {
            Some(ServerState::Provisioning) => add(&mut self.transient.pending, true),
            Some(ServerState::Active) => add(&mut self.transient.active, true),
            Some(ServerState::Draining) => {
                add(&mut self.transient.active, true);
                add(&mut self.transient.draining, true);
            }
            _ => {}
        }
        if c.short_accepting {
            match self.short.binary_search(&id) {
                Ok(pos) if sign < 0 => {
                    self.short.remove(pos);
                }
                Err(pos) if sign > 0 => self.short.insert(pos, id),
                _ => unreachable!("short-only membership out of sync for server {id}"),
            }
        }
    }

    /// Runs `f` on one server and keeps every derived counter in sync.
    fn with_server<R>(&mut self, id: ServerId, f: impl FnOnce(&mut Server) -> R) -> R {
        let before = self.contribution(&self.servers[id.index()]);
        let out = f(&mut self.servers[id.index()]);
        let after = self.contribution(&self.servers[id.index()]);
        if before != after {
            self.apply(id, before, -1);
            self.apply(id, after, 1);
        }
        out
    }

    fn add_server(
        &mut self,
        provenance: Provenance,
        partition: Partition,
        state: ServerState,
        now: SimTime,
    ) -> ServerId {
        let id = ServerId(self.servers.len() as u32);
        let server = Server::new(id, provenance, partition, state, now);
        let c = self.contribution(&server);
        self.servers.push(server);
        if partition == Partition::General && state == ServerState::Active {
            self.general.push(id);
        }
        self.apply(id, c, 1);
        id
    }

    pub fn server(&self, id: ServerId) -> &Server {
        &self.servers[id.index()]
    }

    pub fn servers(&self) -> &[Server] {
        &self.servers
    }

    pub fn len(&self) -> usize {
        self.servers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.servers.is_empty()
    }

    pub fn n_total(&self) -> u32 {
        self.n_total
    }

    pub fn n_long(&self) -> u32 {
        self.n_long
    }

    pub fn transient_counts(&self) -> TransientCounts {
        self.transient
    }

    /// Servers in the short-only partition that are provisioned and not retired.
    pub fn short_partition_live(&self) -> u32 {
        self.servers
            .iter()
            .filter(|s| {
                s.partition == Partition::ShortOnly
                    && matches!(s.state, ServerState::Active | ServerState::Draining)
            })
            .count() as u32
    }

    /// Full rescan of every queue; the oracle for the incremental counters.
    pub fn recount(&self) -> (u32, u32) {
        let mut n_long = 0;
        let mut n_total = 0;
        for s in &self.servers {
            let counted = s.state == ServerState::Active
                || (self.count_draining_in_total && s.state == ServerState::Draining);
            if !counted {
                continue;
            }
            n_total += 1;
            let long_running = s.running.is_some_and(|r| r.task.long);
            if long_running || s.queue.iter().any(|t| t.long) {
                n_long += 1;
            }
        }
        (n_long, n_total)
    }

    pub fn view(&self, now: SimTime) -> LiveView<'_> {
        LiveView { cluster: self, now }
    }

    pub fn snapshot(&self, now: SimTime) -> ClusterSnapshot {
        let servers = self
            .servers
            .iter()
            .map(|s| ServerView {
                id: s.id,
                partition: s.partition,
                provenance: s.provenance,
                state: s.state,
                queue_len: s.queue.len(),
                remaining_work: s.remaining_work(now),
                has_long_task: s.has_long_task(),
            })
            .collect();
        ClusterSnapshot::from_views(now, servers, self.count_draining_in_total)
    }

    /// Appends `task` to the server's FIFO queue, or starts it at once when
    /// the server is idle.
    pub fn enqueue_task(&mut self, id: ServerId, task: TaskRef, now: SimTime) -> Result<Enqueued> {
        let s = &self.servers[id.index()];
        if s.state != ServerState::Active {
            return Err(Error::Logic(format!(
                "enqueue of task {} on server {id} in state {:?}",
                task.task, s.state
            )));
        }
        if task.long && s.partition == Partition::ShortOnly {
            return Err(Error::Logic(format!(
                "long task {} sent to short-only server {id}",
                task.task
            )));
        }
        Ok(self.with_server(id, |s| {
            let predicted_start = now + s.remaining_work(now);
            if task.long {
                s.long_tasks += 1;
            }
            if s.is_idle() {
                s.running = Some(Running { task, started: now });
                s.busy_until = now + task.duration;
                Enqueued {
                    predicted_start,
                    started: true,
                }
            } else {
                s.queued_work += task.duration;
                s.queue.push_back(task);
                Enqueued {
                    predicted_start,
                    started: false,
                }
            }
        }))
    }

    /// Completes the running task and starts the next queued one, if any.
    /// Returns `(finished, next)`.
    pub fn finish_running(
        &mut self,
        id: ServerId,
        now: SimTime,
    ) -> Result<(Running, Option<Running>)> {
        if self.servers[id.index()].running.is_none() {
            return Err(Error::Logic(format!(
                "server {id} finished with nothing running"
            )));
        }
        Ok(self.with_server(id, |s| {
            let done = s.running.take().expect("checked");
            if done.task.long {
                s.long_tasks -= 1;
            }
            let next = s.queue.pop_front().map(|task| {
                s.queued_work = s.queued_work - task.duration;
                s.busy_until = now + task.duration;
                Running { task, started: now }
            });
            s.running = next;
            (done, next)
        }))
    }

    /// Adds a transient short-only server in `Provisioning`.
    pub fn request_transient(&mut self, now: SimTime) -> ServerId {
        self.add_server(
            Provenance::Transient,
            Partition::ShortOnly,
            ServerState::Provisioning,
            now,
        )
    }

    pub fn mark_provisioned(&mut self, id: ServerId, now: SimTime) -> Result<()> {
        if self.servers[id.index()].state != ServerState::Provisioning {
            return Err(Error::Logic(format!("server {id} provisioned twice")));
        }
        self.with_server(id, |s| {
            s.state = ServerState::Active;
            s.provisioned_at = Some(now);
            s.busy_until = now;
        });
        Ok(())
    }

    /// Stops the server from accepting tasks. Returns true when it is
    /// already empty, i.e. the drain completes at `now`.
    pub fn begin_drain(&mut self, id: ServerId, _now: SimTime) -> Result<bool> {
        let s = &self.servers[id.index()];
        if s.provenance != Provenance::Transient {
            return Err(Error::Logic(format!(
                "server {id} is on-demand and cannot be drained"
            )));
        }
        if s.state != ServerState::Active {
            return Err(Error::Logic(format!(
                "drain of server {id} in state {:?}",
                s.state
            )));
        }
        Ok(self.with_server(id, |s| {
            s.state = ServerState::Draining;
            s.is_idle()
        }))
    }

    pub fn retire(&mut self, id: ServerId, now: SimTime) -> Result<()> {
        let s = &self.servers[id.index()];
        if s.state != ServerState::Draining || !s.is_idle() {
            return Err(Error::Logic(format!(
                "retire of server {id} in state {:?} with {} queued",
                s.state,
                s.queue.len()
            )));
        }
        self.with_server(id, |s| {
            s.state = ServerState::Retired;
            s.retired_at = Some(now);
        });
        Ok(())
    }

    /// Marks a transient server as revoked by the provider.
    pub fn mark_revoked(&mut self, id: ServerId) {
        self.servers[id.index()].revoked = true;
    }

    /// Retires the server immediately and hands back everything it held,
    /// the running task first. Returned tasks carry a bumped attempt.
    pub fn evict(&mut self, id: ServerId, now: SimTime) -> Vec<TaskRef> {
        self.with_server(id, |s| {
            let mut out: Vec<TaskRef> = s.running.take().map(|r| r.task).into_iter().collect();
            out.extend(s.queue.drain(..));
            for t in &mut out {
                t.attempt += 1;
            }
            s.long_tasks = 0;
            s.queued_work = SimTime::ZERO;
            s.busy_until = now;
            s.state = ServerState::Retired;
            s.retired_at = Some(now);
            out
        })
    }
}

/// The live cluster observed at `now`, without copying.
#[derive(Clone, Copy)]
pub struct LiveView<'a> {
    cluster: &'a Cluster,
    now: SimTime,
}

impl ClusterView for LiveView<'_> {
    fn now(&self) -> SimTime {
        self.now
    }
    fn general_servers(&self) -> &[ServerId] {
        &self.cluster.general
    }
    fn short_servers(&self) -> &[ServerId] {
        &self.cluster.short
    }
    fn remaining_work(&self, id: ServerId) -> SimTime {
        self.cluster.servers[id.index()].remaining_work(self.now)
    }
    fn has_long_task(&self, id: ServerId) -> bool {
        self.cluster.servers[id.index()].has_long_task()
    }
    fn provenance(&self, id: ServerId) -> Provenance {
        self.cluster.servers[id.index()].provenance
    }
}
