use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    combined_loss, momentum_update, CandidateSet, LossContext, LossParts, Model, NeuralMesh,
    SampleLibrary, SampleOutcome, TaskData, TrainConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{build_cuboid, rasterize, RenderResult};
use crate::memory::{class_quotas, select_exemplars, Exemplar};
use crate::net::AdamW;
use crate::vectors::VectorSet;

/// Loss values of one optimizer step, averaged over the batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub task: usize,
    pub parts: LossParts,
}

impl fmt::Display for StepRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} epoch={} task={} l_cont={:.6} l_etf={:.6} l_kd={:.6} total={:.6}",
            self.step,
            self.epoch,
            self.task,
            self.parts.l_cont,
            self.parts.l_etf,
            self.parts.l_kd,
            self.parts.total
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskTrace {
    pub task: usize,
    pub steps: Vec<StepRecord>,
    /// Mean of the step records of each epoch.
    pub epoch_means: Vec<LossParts>,
    pub warnings: Vec<String>,
}

fn sample(library: &SampleLibrary, id: u64) -> Result<&super::Sample> {
    library
        .get(&id)
        .ok_or_else(|| Error::NotFound(format!("sample {id}")))
}

fn render_for(model: &Model, library: &SampleLibrary, id: u64) -> Result<RenderResult> {
    let s = sample(library, id)?;
    let mesh = model.meshes.get(s.class_id)?;
    rasterize(&mesh.geometry, &s.pose, &model.feature_camera())
}

fn task_seed(config: &TrainConfig, task: usize) -> u64 {
    config
        .seed
        .wrapping_mul(0x2545_f491_4f6c_dd1d)
        .wrapping_add(task as u64 + 1)
}

/// Trains the model on one task: allocates the new class meshes, then runs
/// the configured epochs over the task samples mixed with replay exemplars,
/// and finally refreshes the replay buffer and rebalances the bank.
pub fn train_task(
    model: &mut Model,
    task: &TaskData,
    library: &SampleLibrary,
    config: &TrainConfig,
) -> Result<TaskTrace> {
    let mut trace = TaskTrace {
        task: model.tasks_trained,
        warnings: config.validate()?,
        ..TaskTrace::default()
    };
    let task_index = model.tasks_trained;
    let new_classes: BTreeSet<u32> = task.classes.iter().map(|c| c.id).collect();
    if new_classes.len() != task.classes.len() {
        return Err(Error::invalid("task lists a class twice"));
    }
    for &c in &new_classes {
        if model.meshes.contains(c) || model.partition.used_classes.contains(&c) {
            return Err(Error::AlreadyAllocated(c));
        }
    }
    for &id in &task.sample_ids {
        let s = sample(library, id)?;
        if !new_classes.contains(&s.class_id) {
            return Err(Error::invalid(format!(
                "sample {id} has class {} which the task does not introduce",
                s.class_id
            )));
        }
    }

    // Distillation targets come from the state before this task.
    let old_classes = model.meshes.class_ids();
    let teacher = if old_classes.is_empty() {
        None
    } else {
        Some((
            model.extractor.snapshot(),
            model.meshes.stacked_features(&old_classes)?,
        ))
    };

    for info in &task.classes {
        let geometry = build_cuboid(info.dims, model.config.mesh_vertices)?;
        let theta = model.partition.allocate_class(
            info.id,
            geometry.vertex_count(),
            model.config.seed.wrapping_add(info.id as u64),
        )?;
        let radius = config.neighborhood_radius * geometry.diagonal();
        model
            .meshes
            .add(NeuralMesh::new(info.id, geometry, theta, radius)?)?;
    }

    let mut stream: Vec<u64> = task.sample_ids.clone();
    if config.replay {
        stream.extend(model.replay.iter().map(|e| e.sample_id));
    }
    let renders: BTreeMap<u64, RenderResult> = {
        let m = &*model;
        let mut ids = stream.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.par_iter()
            .map(|&id| Ok((id, render_for(m, library, id)?)))
            .collect::<Result<_>>()?
    };

    let mut rng = ChaCha8Rng::seed_from_u64(task_seed(config, task_index));
    let mut optimizer = AdamW::with_defaults(model.extractor.param_count());
    let centroids = model.partition.centroids.clone();
    let mut step = 0u64;

    for epoch in 0..config.epochs_per_task {
        let lr = config.lr_at_epoch(epoch);
        stream.shuffle(&mut rng);
        let mut epoch_sum = LossParts::default();
        let mut epoch_steps = 0usize;
        for batch in stream.chunks(config.batch_size) {
            let unused = model
                .partition
                .sample_unused(config.unused_sample_size, &mut rng);
            let candidates = CandidateSet::new(&model.meshes, model.bank.features(), &unused)?;
            let ctx = LossContext {
                candidates: &candidates,
                centroids: &centroids,
                teacher: teacher.as_ref().map(|(t, p)| (t, p)),
                config,
            };
            let outcomes: Vec<SampleOutcome> = {
                let m = &*model;
                batch
                    .par_iter()
                    .map(|&id| {
                        let s = sample(library, id)?;
                        combined_loss(
                            &m.extractor,
                            &s.image,
                            &renders[&id],
                            m.meshes.get(s.class_id)?,
                            &ctx,
                        )
                    })
                    .collect::<Result<_>>()?
            };

            let mut parts = LossParts::default();
            let mut grad = vec![0.0; model.extractor.param_count()];
            for o in &outcomes {
                parts.add(&o.parts);
                for (g, x) in grad.iter_mut().zip(&o.param_grad) {
                    *g += x;
                }
            }
            let inv = 1.0 / outcomes.len() as f64;
            parts.scale(inv);
            grad.iter_mut().for_each(|g| *g *= inv);
            if !parts.is_finite() {
                return Err(Error::TrainingDiverged(format!(
                    "task {task_index} epoch {epoch} step {step}: l_cont={} l_etf={} l_kd={}",
                    parts.l_cont, parts.l_etf, parts.l_kd
                )));
            }
            optimizer
                .step(&mut model.extractor.params, &grad, lr)
                .map_err(|e| {
                    Error::TrainingDiverged(format!(
                        "task {task_index} epoch {epoch} step {step}: {e}"
                    ))
                })?;

            for (&id, o) in batch.iter().zip(&outcomes) {
                let class = o.correspondences.class_id;
                if new_classes.contains(&class) || config.momentum_on_replay {
                    momentum_update(model.meshes.get_mut(class)?, &o.correspondences, config.eta)?;
                }
                model
                    .bank
                    .update(&o.map, &renders[&id], config.bg_update_count, &mut rng)?;
            }

            trace.steps.push(StepRecord {
                step,
                epoch,
                task: task_index,
                parts,
            });
            epoch_sum.add(&parts);
            epoch_steps += 1;
            step += 1;
        }
        if epoch_steps > 0 {
            epoch_sum.scale(1.0 / epoch_steps as f64);
        }
        trace.epoch_means.push(epoch_sum);
    }

    // Refresh the replay buffer: shrink old classes, then add the new ones.
    let all_classes = model.meshes.class_ids();
    let quotas = model.replay.rebalance(&all_classes, &mut rng)?;
    for &c in &new_classes {
        let candidates: Vec<Exemplar> = task
            .sample_ids
            .iter()
            .map(|&id| sample(library, id))
            .filter_map(|s| match s {
                Ok(s) if s.class_id == c => Some(Ok(Exemplar {
                    sample_id: s.id,
                    class_id: c,
                    pose: s.pose.canonical(),
                })),
                Ok(_) => None,
                Err(e) => Some(Err(e)),
            })
            .collect::<Result<_>>()?;
        let quota = quotas.get(&c).copied().unwrap_or(0);
        if quota == 0 || candidates.is_empty() {
            trace
                .warnings
                .push(format!("class {c} stored no exemplars (quota {quota})"));
            continue;
        }
        let sel = select_exemplars(&candidates, quota, model.replay.bins, &mut rng)?;
        if sel.short {
            trace.warnings.push(format!(
                "class {c}: only {} samples for {quota} exemplar slots",
                sel.exemplars.len()
            ));
        }
        model.replay.insert_class(c, sel.exemplars)?;
    }
    if !model.replay.is_empty() {
        bg_balance(model, library, &mut rng)?;
    }
    model.tasks_trained += 1;
    Ok(trace)
}

/// Refills the background bank with off-object features of the replay
/// exemplars, split evenly across exemplar classes. Returns how many
/// features each class supplied. Slots no class could fill keep their most
/// recent previous entries.
pub fn bg_balance<R: Rng + ?Sized>(
    model: &mut Model,
    library: &SampleLibrary,
    rng: &mut R,
) -> Result<BTreeMap<u32, usize>> {
    let classes = model.replay.class_ids();
    if classes.is_empty() {
        return Err(Error::invalid("background balancing needs replay exemplars"));
    }
    let quotas = class_quotas(model.bank.capacity(), &classes);
    let exemplars: Vec<Exemplar> = model.replay.iter().copied().collect();
    let per_exemplar: Vec<(u32, VectorSet)> = {
        let m = &*model;
        exemplars
            .par_iter()
            .map(|e| {
                let s = sample(library, e.sample_id)?;
                let render = render_for(m, library, e.sample_id)?;
                let map = m.extractor.forward(&s.image)?;
                let mut bg = VectorSet::new(map.dim());
                for (i, &on) in render.object_mask.iter().enumerate() {
                    if !on {
                        bg.push(map.at(i));
                    }
                }
                Ok((e.class_id, bg))
            })
            .collect::<Result<_>>()?
    };

    let mut fresh = VectorSet::with_capacity(model.bank.dim(), model.bank.capacity());
    let mut counts = BTreeMap::new();
    for (&c, &q) in &quotas {
        let mut sources: Vec<&VectorSet> = per_exemplar
            .iter()
            .filter(|(cls, bg)| *cls == c && !bg.is_empty())
            .map(|(_, bg)| bg)
            .collect();
        sources.shuffle(rng);
        let mut n = 0;
        if !sources.is_empty() {
            for j in 0..q {
                let bg = sources[j % sources.len()];
                fresh.push(bg.row(rng.random_range(0..bg.len())));
                n += 1;
            }
        }
        counts.insert(c, n);
    }
    if fresh.len() < model.bank.capacity() {
        let mut order = model.bank.eviction_order();
        order.reverse();
        for &slot in order.iter().take(model.bank.capacity() - fresh.len()) {
            fresh.push(model.bank.features().row(slot));
        }
    }
    model.bank.replace_all(fresh)?;
    Ok(counts)
}
