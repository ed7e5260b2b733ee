//! Order-preserving fan-out over scoped threads.

/// Applies `f` to every item on up to `workers` threads (round-robin
/// assignment) and returns the results in input order.
pub fn par_map<T, U, F>(items: &[T], workers: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    let workers = workers.min(items.len());
    let mut slots: Vec<Option<U>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let f = &f;
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..items.len())
                        .step_by(workers)
                        .map(|i| (i, f(i, &items[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, out) in h.join().expect("worker thread panicked") {
                slots[i] = Some(out);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every item assigned")).collect()
}

#[cfg(test)]
mod tests {
    use super::par_map;

    #[test]
    fn preserves_order() {
        let items: Vec<u64> = (0..37).collect();
        let seq = par_map(&items, 1, |i, x| x * 3 + i as u64);
        for w in [2, 4, 64] {
            assert_eq!(par_map(&items, w, |i, x| x * 3 + i as u64), seq);
        }
    }
}
