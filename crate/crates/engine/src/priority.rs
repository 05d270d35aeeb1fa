//! Best-effort thread scheduling hints. Failures are not errors: the live
//! session runs at default priority when the OS refuses.

/// Puts the calling thread in the real-time FIFO class. Returns whether the OS accepted.
#[cfg(target_os = "linux")]
pub fn raise_to_realtime() -> bool {
    // SAFETY: plain syscalls on the calling thread with a fully initialized param.
    unsafe {
        let param = libc::sched_param { sched_priority: 20 };
        libc::pthread_setschedparam(libc::pthread_self(), libc::SCHED_FIFO, &param) == 0
    }
}

/// Raises the nice value of the calling thread so that a starved audio
/// thread wins the core back first. Unprivileged callers may always do this.
#[cfg(target_os = "linux")]
pub fn yield_to_audio() {
    // SAFETY: on Linux, PRIO_PROCESS with a thread id applies to that thread only.
    unsafe {
        let tid = libc::syscall(libc::SYS_gettid) as libc::id_t;
        libc::setpriority(libc::PRIO_PROCESS, tid, 10);
    }
}

#[cfg(not(target_os = "linux"))]
pub fn raise_to_realtime() -> bool {
    false
}

#[cfg(not(target_os = "linux"))]
pub fn yield_to_audio() {}
