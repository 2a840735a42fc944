use serde::{Deserialize, Serialize};

use super::{EnvError, Point};

/// Work-surface and body dimensions, all lengths in centimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    pub surface_width: f64,
    pub surface_height: f64,
    pub tool_half_extents: Point,
    pub object_half_extent: f64,
    pub obstacle_half_extent: f64,
    pub target_half_extent: f64,
    /// Tool displacement per action.
    pub d_a: f64,
    pub eps_suc: f64,
    pub eps_fail: f64,
    pub n_steps: u32,
    /// Lateral slip of pushed objects, as a fraction of the push distance.
    pub slip_sigma: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            surface_width: 50.0,
            surface_height: 30.0,
            tool_half_extents: Point::new(3.0, 0.5),
            object_half_extent: 2.0,
            obstacle_half_extent: 2.0,
            target_half_extent: 3.0,
            d_a: 1.0,
            eps_suc: 2.0,
            eps_fail: 0.5,
            n_steps: 150,
            slip_sigma: 0.0,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let positive = [
            ("surface_width", self.surface_width),
            ("surface_height", self.surface_height),
            ("tool_half_extents.x", self.tool_half_extents.x),
            ("tool_half_extents.y", self.tool_half_extents.y),
            ("object_half_extent", self.object_half_extent),
            ("obstacle_half_extent", self.obstacle_half_extent),
            ("target_half_extent", self.target_half_extent),
            ("d_a", self.d_a),
            ("eps_suc", self.eps_suc),
            ("eps_fail", self.eps_fail),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(EnvError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.slip_sigma.is_finite() && self.slip_sigma >= 0.0) {
            return Err(EnvError::InvalidConfig(format!(
                "slip_sigma must be non-negative, got {}",
                self.slip_sigma
            )));
        }
        if self.n_steps == 0 {
            return Err(EnvError::InvalidConfig("n_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn object_half(&self) -> Point {
        Point::new(self.object_half_extent, self.object_half_extent)
    }

    pub fn obstacle_half(&self) -> Point {
        Point::new(self.obstacle_half_extent, self.obstacle_half_extent)
    }

    pub fn target_half(&self) -> Point {
        Point::new(self.target_half_extent, self.target_half_extent)
    }

    /// Distractors share the manipulation object's footprint.
    pub fn distractor_half(&self) -> Point {
        self.object_half()
    }

    /// Fixed start pose of the tool: centred on the lower edge, one centimetre in.
    pub fn tool_start(&self) -> Point {
        Point::new(self.surface_width / 2.0, self.tool_half_extents.y + 1.0)
    }

    /// Short hex digest of the canonical JSON form, stored in checkpoints.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("geometry config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn contains_box(&self, center: Point, half: Point) -> bool {
        center.x - half.x >= 0.0
            && center.x + half.x <= self.surface_width
            && center.y - half.y >= 0.0
            && center.y + half.y <= self.surface_height
    }
}
