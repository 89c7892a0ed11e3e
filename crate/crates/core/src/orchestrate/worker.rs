//! Bounded pool of workflow executors fed by a channel of document ids.

use std::sync::{mpsc, Arc, Mutex};
use std::thread::JoinHandle;

use super::vault::Vault;
use super::OrchestrateError;

pub struct WorkerPool {
    vault: Arc<Vault>,
    threads: Vec<JoinHandle<()>>,
}

impl WorkerPool {
    /// Starts `workers` threads and re-queues every unfinished document.
    pub fn start(vault: Arc<Vault>, workers: usize) -> Result<Self, OrchestrateError> {
        let (tx, rx) = mpsc::channel::<String>();
        let rx = Arc::new(Mutex::new(rx));
        let threads = (0..workers.max(1))
            .map(|i| {
                let rx = Arc::clone(&rx);
                let vault = Arc::clone(&vault);
                std::thread::Builder::new()
                    .name(format!("docvault-worker-{i}"))
                    .spawn(move || loop {
                        let next = rx.lock().expect("worker queue lock").recv();
                        let Ok(doc) = next else { break };
                        if let Err(e) = vault.run_to_rest(&doc) {
                            tracing::warn!(document = %doc, error = %e, "workflow stopped with an error");
                        }
                    })
                    .expect("spawn worker")
            })
            .collect();
        *vault.queue.lock().expect("queue lock") = Some(tx);
        for doc in vault.resumable()? {
            vault.kick(&doc);
        }
        Ok(Self { vault, threads })
    }

    /// Stops accepting work and waits for in-flight documents.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.vault.queue.lock().expect("queue lock").take();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        self.stop();
    }
}
