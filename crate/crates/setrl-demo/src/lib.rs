//! Browser demo of set-input policies: an interactive scavenger episode
//! with live attention weights, an object-shuffle invariance check, the
//! attention-vs-ordered training curves, and a search-space calculator.
//!
//! The simulation logic is plain Rust (see [`sim`]) and is tested
//! natively; `wasm` wraps it in string-in, string-out bindings for a
//! static page with no framework. Build the page bundle with wasm-pack:
//!
//! ```text
//! wasm-pack build crates/setrl-demo --target web --out-dir www/pkg
//! ```
//!
//! then serve `crates/setrl-demo/www/` from any static file server.

mod sim;

pub use sim::{
    space_view, training_curves, Curve, DemoError, DemoSim, ObjectView, ShuffleCheck, SimState,
    SpaceView,
};

#[cfg(target_arch = "wasm32")]
mod wasm {
    use wasm_bindgen::prelude::*;

    use crate::sim;

    fn js<T: serde::Serialize>(value: &T) -> Result<String, JsError> {
        serde_json::to_string(value).map_err(|e| JsError::new(&e.to_string()))
    }

    fn err(e: sim::DemoError) -> JsError {
        JsError::new(&e.to_string())
    }

    /// An interactive episode driven by the embedded trained policy.
    #[wasm_bindgen]
    pub struct Demo {
        sim: sim::DemoSim,
    }

    #[wasm_bindgen]
    impl Demo {
        #[wasm_bindgen(constructor)]
        pub fn new(seed: u32) -> Result<Demo, JsError> {
            Ok(Demo {
                sim: sim::DemoSim::new(seed as u64).map_err(err)?,
            })
        }

        /// Current state as JSON.
        pub fn state(&self) -> Result<String, JsError> {
            js(&self.sim.state().map_err(err)?)
        }

        /// Advances one step and returns the new state as JSON.
        pub fn step(&mut self) -> Result<String, JsError> {
            self.sim.step().map_err(err)?;
            self.state()
        }

        /// Starts the next episode and returns its state as JSON.
        pub fn reset(&mut self) -> Result<String, JsError> {
            self.sim.reset();
            self.state()
        }

        /// Permutes the scene's objects and reports both actions and
        /// their largest difference, as JSON.
        pub fn shuffle_check(&self, perm_seed: u32) -> Result<String, JsError> {
            js(&self.sim.shuffle_check(perm_seed as u64).map_err(err)?)
        }
    }

    /// Embedded attention-vs-ordered training curves as JSON.
    #[wasm_bindgen]
    pub fn training_curves() -> Result<String, JsError> {
        js(&sim::training_curves().map_err(err)?)
    }

    /// Ordered and invariant search-space sizes as JSON, counts as
    /// decimal strings.
    #[wasm_bindgen]
    pub fn space_report(n: u32, m: u32) -> Result<String, JsError> {
        js(&sim::space_view(n as u64, m as u64).map_err(err)?)
    }
}
