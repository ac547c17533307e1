//! Scalar abstraction: any float `rustfft` can transform.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

/// Floating-point scalar usable throughout the library: `f32` or `f64`.
///
/// Carries its own FFT planner cache so that repeated transforms of the same
/// length reuse plans without threading a context object through every call.
pub trait Scalar:
    rustfft::FftNum
    + num_traits::Float
    + num_traits::FloatConst
    + std::fmt::Display
    + std::fmt::LowerExp
{
    /// Lossy conversion from `f64`; used to pin tolerances and constants.
    fn of(x: f64) -> Self {
        num_traits::NumCast::from(x).expect("finite f64 converts to Scalar")
    }

    fn as_f64(self) -> f64 {
        num_traits::NumCast::from(self).expect("Scalar converts to f64")
    }

    fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<Self>>;

    /// 2π, the fundamental wavenumber of the unit period.
    fn two_pi() -> Self {
        <Self as num_traits::FloatConst>::TAU()
    }
}

macro_rules! impl_scalar {
    ($t:ty, $cache:ident) => {
        thread_local! {
            static $cache: RefCell<FftPlanner<$t>> = RefCell::new(FftPlanner::new());
        }

        impl Scalar for $t {
            fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<$t>> {
                $cache.with(|planner| {
                    let mut planner = planner.borrow_mut();
                    if inverse {
                        planner.plan_fft_inverse(len)
                    } else {
                        planner.plan_fft_forward(len)
                    }
                })
            }
        }
    };
}

impl_scalar!(f32, PLANNER_F32);
impl_scalar!(f64, PLANNER_F64);
