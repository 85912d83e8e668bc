// SPDX-License-Identifier: Apache-2.0

//! Order-preserving batch maps that run on rayon when the `parallel`
//! feature is enabled and fall back to a plain loop otherwise.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

/// `items.into_iter().map(f).collect()`, in input order.
pub fn map_owned<T, U, F>(items: Vec<T>, mode: ExecMode, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            items.into_par_iter().map(f).collect()
        }
        _ => items.into_iter().map(f).collect(),
    }
}

/// `items.iter().map(f).collect()`, in input order.
pub fn map_ref<T, U, F>(items: &[T], mode: ExecMode, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let input: Vec<u64> = (0..10_000).collect();
        let seq = map_ref(&input, ExecMode::Sequential, |x| x * 3);
        let par = map_ref(&input, ExecMode::Parallel, |x| x * 3);
        assert_eq!(seq, par);
        assert_eq!(map_owned(input, ExecMode::Parallel, |x| x + 1)[9_999], 10_000);
    }
}
