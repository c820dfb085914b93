use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

const WINDOW: Duration = Duration::from_secs(60);

struct State {
    in_flight: usize,
    recent: VecDeque<Instant>,
}

/// Caps concurrent calls and calls per rolling minute for one backend.
pub struct Limiter {
    max_in_flight: usize,
    rpm: usize,
    state: Mutex<State>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Limiter {
    pub fn new(max_in_flight: usize, rpm: u32) -> Self {
        Self {
            max_in_flight: max_in_flight.max(1),
            rpm: (rpm as usize).max(1),
            state: Mutex::new(State {
                in_flight: 0,
                recent: VecDeque::new(),
            }),
            freed: Condvar::new(),
        }
    }

    /// Blocks until a slot is free and the minute budget allows another call.
    pub fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().expect("limiter lock");
        loop {
            let now = Instant::now();
            while st.recent.front().is_some_and(|t| now.duration_since(*t) >= WINDOW) {
                st.recent.pop_front();
            }
            if st.in_flight < self.max_in_flight {
                if st.recent.len() < self.rpm {
                    st.in_flight += 1;
                    st.recent.push_back(now);
                    return Permit { limiter: self };
                }
                let wait = WINDOW - now.duration_since(*st.recent.front().expect("non-empty"));
                st = self.freed.wait_timeout(st, wait).expect("limiter lock").0;
            } else {
                st = self.freed.wait(st).expect("limiter lock");
            }
        }
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().expect("limiter lock").in_flight
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.limiter.state.lock().expect("limiter lock");
        st.in_flight -= 1;
        drop(st);
        self.limiter.freed.notify_all();
    }
}
