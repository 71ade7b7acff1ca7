//! Background notification delivery. One worker thread handles events in
//! commit order, so every recipient sees notifications in order.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use rcm_core::notify::{Channel, Notification};
use rcm_core::AuditEvent;

enum Message {
    Deliver(AuditEvent, Vec<Notification>),
    Flush(Sender<()>),
}

pub struct Dispatcher {
    channel: Channel,
    tx: Option<Sender<Message>>,
    worker: Option<JoinHandle<()>>,
    records: Arc<Mutex<Vec<Notification>>>,
}

impl Dispatcher {
    /// Webhook channel when `webhooks` is non-empty, log channel otherwise.
    /// Records are appended to `log_path` when given.
    pub fn start(webhooks: Vec<String>, log_path: Option<PathBuf>) -> Self {
        let channel = if webhooks.is_empty() {
            Channel::Log
        } else {
            Channel::Webhook
        };
        let records = Arc::new(Mutex::new(
            log_path.as_deref().map(read_records).unwrap_or_default(),
        ));
        let (tx, rx) = mpsc::channel();
        let worker = Worker {
            webhooks,
            log: log_path.and_then(|p| OpenOptions::new().create(true).append(true).open(p).ok()),
            records: Arc::clone(&records),
        };
        let handle = std::thread::Builder::new()
            .name("rcm-notify".into())
            .spawn(move || worker.run(rx))
            .expect("spawn notification worker");
        Self {
            channel,
            tx: Some(tx),
            worker: Some(handle),
            records,
        }
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    /// Queues delivery and returns immediately.
    pub fn dispatch(&self, event: AuditEvent, notifications: Vec<Notification>) {
        if notifications.is_empty() {
            return;
        }
        if let Some(tx) = &self.tx {
            let _ = tx.send(Message::Deliver(event, notifications));
        }
    }

    /// Blocks until everything queued so far has been handled.
    pub fn flush(&self) {
        let (done_tx, done_rx) = mpsc::channel();
        if let Some(tx) = &self.tx {
            if tx.send(Message::Flush(done_tx)).is_ok() {
                let _ = done_rx.recv();
            }
        }
    }

    pub fn records(&self) -> Vec<Notification> {
        self.records.lock().expect("notification records").clone()
    }
}

impl Drop for Dispatcher {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

fn read_records(path: &std::path::Path) -> Vec<Notification> {
    let Ok(file) = File::open(path) else {
        return Vec::new();
    };
    BufReader::new(file)
        .lines()
        .map_while(|l| l.ok())
        .filter_map(|l| serde_json::from_str(&l).ok())
        .collect()
}

struct Worker {
    webhooks: Vec<String>,
    log: Option<File>,
    records: Arc<Mutex<Vec<Notification>>>,
}

impl Worker {
    fn run(mut self, rx: Receiver<Message>) {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(3)))
            .build()
            .into();
        for message in rx {
            match message {
                Message::Deliver(event, notifications) => self.deliver(&agent, &event, notifications),
                Message::Flush(done) => {
                    let _ = done.send(());
                }
            }
        }
    }

    fn deliver(&mut self, agent: &ureq::Agent, event: &AuditEvent, mut notifications: Vec<Notification>) {
        let delivered = if self.webhooks.is_empty() {
            true
        } else {
            let body = serde_json::to_string(event).unwrap_or_default();
            let mut all = true;
            for url in &self.webhooks {
                let ok = agent
                    .post(url)
                    .header("Content-Type", "application/json")
                    .send(body.as_str())
                    .is_ok_and(|r| r.status().is_success());
                all &= ok;
            }
            all
        };
        for n in &mut notifications {
            n.delivered = delivered;
        }
        let mut written = true;
        if let Some(log) = &mut self.log {
            for n in &notifications {
                let line = serde_json::to_string(n).unwrap_or_default();
                written &= writeln!(log, "{line}").is_ok();
            }
            written &= log.flush().is_ok();
        }
        if !written && self.webhooks.is_empty() {
            for n in &mut notifications {
                n.delivered = false;
            }
        }
        self.records
            .lock()
            .expect("notification records")
            .extend(notifications);
    }
}
