use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random-waypoint walker in a square `[0, side]^2`.
///
/// Legs are generated lazily from the walker's own RNG stream, so a
/// position query never depends on how many other walkers exist.
pub struct RandomWaypoint {
    rng: ChaCha8Rng,
    side: f64,
    speed: (f64, f64),
    pause: f64,
    from: (f64, f64),
    to: (f64, f64),
    depart: f64,
    arrive: f64,
    resume: f64,
}

impl RandomWaypoint {
    pub fn new(mut rng: ChaCha8Rng, side: f64, speed_min: f64, speed_max: f64, pause: f64) -> Self {
        let start = (rng.gen::<f64>() * side, rng.gen::<f64>() * side);
        let mut w = RandomWaypoint {
            rng,
            side,
            speed: (speed_min, speed_max),
            pause,
            from: start,
            to: start,
            depart: 0.0,
            arrive: 0.0,
            resume: 0.0,
        };
        w.next_leg(0.0);
        w
    }

    fn next_leg(&mut self, t: f64) {
        self.from = self.to;
        self.to = (self.rng.gen::<f64>() * self.side, self.rng.gen::<f64>() * self.side);
        let (lo, hi) = self.speed;
        let speed = if hi > lo { self.rng.gen_range(lo..hi) } else { lo };
        self.depart = t;
        let dist = ((self.to.0 - self.from.0).powi(2) + (self.to.1 - self.from.1).powi(2)).sqrt();
        if speed <= 0.0 {
            // A zero-speed walker never leaves its start point.
            self.to = self.from;
            self.arrive = f64::INFINITY;
        } else {
            self.arrive = t + dist / speed;
        }
        self.resume = self.arrive + self.pause;
    }

    /// Position at time `t`. Queries must not go backwards in time.
    pub fn position(&mut self, t: f64) -> (f64, f64) {
        while t >= self.resume {
            let r = self.resume;
            self.next_leg(r);
        }
        if t >= self.arrive {
            return self.to;
        }
        let f = if self.arrive > self.depart { (t - self.depart) / (self.arrive - self.depart) } else { 1.0 };
        (
            self.from.0 + f * (self.to.0 - self.from.0),
            self.from.1 + f * (self.to.1 - self.from.1),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn walker(seed: u64, speed: (f64, f64)) -> RandomWaypoint {
        RandomWaypoint::new(ChaCha8Rng::seed_from_u64(seed), 500.0, speed.0, speed.1, 0.0)
    }

    #[test]
    fn stays_inside_and_respects_speed() {
        let mut w = walker(1, (0.0, 20.0));
        let mut last = w.position(0.0);
        for i in 1..20_000 {
            let t = i as f64 * 0.05;
            let p = w.position(t);
            assert!((0.0..=500.0).contains(&p.0) && (0.0..=500.0).contains(&p.1));
            let step = ((p.0 - last.0).powi(2) + (p.1 - last.1).powi(2)).sqrt();
            assert!(step <= 20.0 * 0.05 + 1e-9, "moved {step} in 50 ms");
            last = p;
        }
    }

    #[test]
    fn zero_speed_is_stationary() {
        let mut w = walker(2, (0.0, 0.0));
        let p = w.position(0.0);
        assert_eq!(w.position(1e6), p);
    }

    #[test]
    fn deterministic() {
        let mut a = walker(3, (1.0, 5.0));
        let mut b = walker(3, (1.0, 5.0));
        for i in 0..1000 {
            assert_eq!(a.position(i as f64), b.position(i as f64));
        }
    }
}
