use wasm_bindgen::prelude::*;

use protodetect::model::ScoringMode;

pub mod scene;

pub use scene::Scene;

fn js_err(e: protodetect::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
}

#[wasm_bindgen]
impl Demo {
    /// Generate 2-D clusters and train on them. `mode` is "density" or "verbatim".
    #[wasm_bindgen(constructor)]
    pub fn new(classes: usize, per_class: usize, seed: u32, mode: &str, m: f64, snap: bool) -> Result<Demo, JsError> {
        let mode: ScoringMode = mode.parse().map_err(js_err)?;
        let scene = Scene::build(classes, per_class, u64::from(seed), mode, m, snap).map_err(js_err)?;
        Ok(Demo { scene })
    }

    /// Points, prototypes, bounds and probe metrics as JSON.
    pub fn summary(&self) -> Result<String, JsError> {
        let v = self.scene.summary().map_err(js_err)?;
        Ok(v.to_string())
    }

    /// Verdict per cell, row-major from the top-left; -1 marks a flagged cell.
    #[wasm_bindgen(js_name = verdictGrid)]
    pub fn verdict_grid(&self, cols: usize, rows: usize) -> Result<Vec<i32>, JsError> {
        self.scene.verdict_grid(cols, rows).map_err(js_err)
    }

    /// Rule and nearest prototypes for one point, as JSON.
    pub fn explain(&self, x: f64, y: f64, k: usize) -> Result<String, JsError> {
        let v = self.scene.explain(x, y, k).map_err(js_err)?;
        Ok(v.to_string())
    }
}
