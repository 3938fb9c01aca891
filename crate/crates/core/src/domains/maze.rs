//! Probabilistic mazes: grid worlds whose walls are doors that open with
//! some probability. A failed move leaves the agent in place, so every
//! action row has support on the current cell and at most one neighbour.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_state, Error, Result};
use crate::model::{MdpModel, ModelBuilder};

pub const STAY: usize = 0;
pub const EAST: usize = 1;
pub const WEST: usize = 2;
pub const SOUTH: usize = 3;
pub const NORTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    East,
    West,
    South,
    North,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::East, Direction::West, Direction::South, Direction::North];

    pub fn action(self) -> usize {
        match self {
            Direction::East => EAST,
            Direction::West => WEST,
            Direction::South => SOUTH,
            Direction::North => NORTH,
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::East => Direction::West,
            Direction::West => Direction::East,
            Direction::South => Direction::North,
            Direction::North => Direction::South,
        }
    }

    /// Unit step in grid coordinates; y grows southward.
    pub fn offset(self) -> (i64, i64) {
        match self {
            Direction::East => (1, 0),
            Direction::West => (-1, 0),
            Direction::South => (0, 1),
            Direction::North => (0, -1),
        }
    }
}

/// A door on the side `direction` of `cell`. `p = 0` is a solid wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Door {
    pub cell: usize,
    pub direction: Direction,
    pub p: f64,
}

/// Layout of a maze. Cell `(x, y)` has index `y * width + x`. Internal
/// edges without a door entry are open; the outer border is solid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub doors: Vec<Door>,
    pub start: usize,
    pub goal: usize,
}

impl MazeSpec {
    pub fn open(width: usize, height: usize, start: usize, goal: usize) -> Self {
        Self {
            width,
            height,
            doors: Vec::new(),
            start,
            goal,
        }
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn cell(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.width, cell / self.width)
    }

    pub fn neighbor(&self, cell: usize, dir: Direction) -> Option<usize> {
        let (x, y) = self.coords(cell);
        let (dx, dy) = dir.offset();
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            return None;
        }
        Some(self.cell(nx as usize, ny as usize))
    }

    /// Success probability of every internal edge, keyed by the edge's
    /// (cell, direction) seen from both sides.
    fn door_table(&self) -> Result<BTreeMap<(usize, Direction), f64>> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter {
                name: "width",
                value: self.width.min(self.height) as f64,
                reason: "maze dimensions must be positive",
            });
        }
        check_state(self.start, self.cells())?;
        check_state(self.goal, self.cells())?;
        let mut table = BTreeMap::new();
        for door in &self.doors {
            check_state(door.cell, self.cells())?;
            if !(0.0..=1.0).contains(&door.p) {
                return Err(Error::InvalidParameter {
                    name: "door probability",
                    value: door.p,
                    reason: "must lie in [0, 1]",
                });
            }
            let Some(other) = self.neighbor(door.cell, door.direction) else {
                // Border sides are already solid.
                if door.p > 0.0 {
                    return Err(Error::Parse(format!(
                        "door on the outer border at cell {} {:?}",
                        door.cell, door.direction
                    )));
                }
                continue;
            };
            for key in [(door.cell, door.direction), (other, door.direction.opposite())] {
                if let Some(&prev) = table.get(&key) {
                    if prev != door.p {
                        return Err(Error::Parse(format!(
                            "conflicting doors between cells {} and {other}",
                            door.cell
                        )));
                    }
                }
                table.insert(key, door.p);
            }
        }
        Ok(table)
    }

    pub fn door_probability(&self, cell: usize, dir: Direction) -> Result<f64> {
        let table = self.door_table()?;
        Ok(match self.neighbor(cell, dir) {
            None => 0.0,
            Some(_) => table.get(&(cell, dir)).copied().unwrap_or(1.0),
        })
    }

    /// Cell positions as `[x, y]`.
    pub fn coordinates(&self) -> Vec<Vec<f64>> {
        (0..self.cells())
            .map(|c| {
                let (x, y) = self.coords(c);
                vec![x as f64, y as f64]
            })
            .collect()
    }
}

/// Five actions (stay, E, W, S, N), all of cost 1 except staying at the goal,
/// which costs 0 and is the goal-stay pair.
pub fn build_maze(spec: &MazeSpec) -> Result<MdpModel> {
    let table = spec.door_table()?;
    let n = spec.cells();
    let mut b = ModelBuilder::new(n, 5)
        .labels((0..n).map(|c| {
            let (x, y) = spec.coords(c);
            format!("{x},{y}")
        }))
        .embedding(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ]);
    for c in 0..n {
        let stay_cost = if c == spec.goal { 0.0 } else { 1.0 };
        b = b.action(c, STAY, stay_cost, &[(c, 1.0)]);
        for dir in Direction::ALL {
            let outcomes = match spec.neighbor(c, dir) {
                Some(next) => {
                    let p = table.get(&(c, dir)).copied().unwrap_or(1.0);
                    if p == 1.0 {
                        vec![(next, 1.0)]
                    } else if p == 0.0 {
                        vec![(c, 1.0)]
                    } else {
                        vec![(c, 1.0 - p), (next, p)]
                    }
                }
                None => vec![(c, 1.0)],
            };
            b = b.action(c, dir.action(), 1.0, &outcomes);
        }
    }
    b.goal_stay(spec.goal, STAY).build()
}

/// Random maze: every internal edge is a solid wall with probability
/// `solid_fraction`, otherwise a door with success probability uniform in
/// `[p_lo, p_hi]`. Start is the top-left cell and goal the bottom-right.
pub fn random_maze<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    p_lo: f64,
    p_hi: f64,
    solid_fraction: f64,
    rng: &mut R,
) -> Result<MazeSpec> {
    if !(0.0 < p_lo && p_lo <= p_hi && p_hi <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "door probability",
            value: p_lo,
            reason: "need 0 < p_lo <= p_hi <= 1",
        });
    }
    let mut spec = MazeSpec::open(width, height, 0, width * height - 1);
    for c in 0..spec.cells() {
        for dir in [Direction::East, Direction::South] {
            if spec.neighbor(c, dir).is_none() {
                continue;
            }
            let p = if rng.gen::<f64>() < solid_fraction {
                0.0
            } else {
                rng.gen_range(p_lo..=p_hi)
            };
            spec.doors.push(Door { cell: c, direction: dir, p });
        }
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;
    use rand::SeedableRng;
    use crate::quasimetric::{distance_to_goal, graph_from_model};

    fn corridor(p: f64) -> MazeSpec {
        MazeSpec {
            width: 2,
            height: 1,
            doors: vec![Door {
                cell: 0,
                direction: Direction::East,
                p,
            }],
            start: 0,
            goal: 1,
        }
    }

    #[test]
    fn open_door_is_one_step() {
        let m = build_maze(&corridor(1.0)).unwrap();
        assert!(validate_model(&m).is_empty());
        let d = distance_to_goal(&graph_from_model(&m), 1).unwrap();
        assert_eq!(d.value(0), 1.0);
    }

    #[test]
    fn quarter_door_costs_four() {
        let m = build_maze(&corridor(0.25)).unwrap();
        let d = distance_to_goal(&graph_from_model(&m), 1).unwrap();
        assert_eq!(d.value(0), 4.0);
        assert_eq!(m.row(1, WEST).prob_of(0), 0.25);
        assert_eq!(m.row(1, WEST).prob_of(1), 0.75);
    }

    #[test]
    fn solid_wall_is_a_self_loop() {
        let m = build_maze(&corridor(0.0)).unwrap();
        assert_eq!(m.row(0, EAST).prob_of(0), 1.0);
        let d = distance_to_goal(&graph_from_model(&m), 1).unwrap();
        assert!(!d.is_reachable(0));
    }

    #[test]
    fn rows_touch_at_most_one_neighbour() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let spec = random_maze(6, 5, 0.1, 1.0, 0.2, &mut rng).unwrap();
        let m = build_maze(&spec).unwrap();
        assert!(validate_model(&m).is_empty());
        for c in 0..spec.cells() {
            for u in 0..5 {
                let others = m.row(c, u).iter().filter(|&(z, _)| z != c).count();
                assert!(others <= 1);
            }
        }
    }

    #[test]
    fn bad_specs_are_rejected() {
        let mut s = corridor(0.5);
        s.goal = 7;
        assert!(build_maze(&s).is_err());
        let mut s = corridor(1.5);
        assert!(build_maze(&s).is_err());
        s.doors[0].p = 0.5;
        s.doors.push(Door {
            cell: 1,
            direction: Direction::West,
            p: 0.7,
        });
        assert!(build_maze(&s).is_err());
    }
}
