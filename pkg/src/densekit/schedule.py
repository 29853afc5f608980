"""Learning-rate controllers: triangular2 cyclical schedule, the fixed
six-phase replay, the range-escalation rule applied when a phase fails
to improve validation accuracy, and reduce-on-plateau.
"""

from dataclasses import dataclass, field


@dataclass
class CLRPhase:
    base_lr: float
    max_lr: float
    step_size_epochs: float
    start_epoch: float
    end_epoch: float

    def __post_init__(self):
        if self.base_lr >= self.max_lr:
            raise ValueError("base_lr must be < max_lr")
        if self.start_epoch >= self.end_epoch:
            raise ValueError("phase must span at least one epoch")


# Six-phase schedule of the 108-epoch cyclical run
REPLAY_PHASES = [
    CLRPhase(1e-4, 6e-4, 6, 0, 24),
    CLRPhase(1e-5, 6e-5, 6, 24, 48),
    CLRPhase(1e-5, 6e-5, 4, 48, 72),
    CLRPhase(1e-6, 6e-6, 2, 72, 84),
    CLRPhase(1e-5, 6e-5, 2, 84, 96),
    CLRPhase(1e-7, 6e-7, 2, 96, 108),
]
REPLAY_TOTAL_EPOCHS = 108


def clr_lr(epoch_frac, phase):
    """Triangular wave between base and max over 2*step_size epochs, the
    peak of cycle i (1-based) scaled by 1/2^(i-1)."""
    t = epoch_frac - phase.start_epoch
    if t < 0 or epoch_frac > phase.end_epoch:
        raise ValueError(f"epoch {epoch_frac} outside phase span "
                         f"[{phase.start_epoch}, {phase.end_epoch}]")
    cycle = int(t // (2 * phase.step_size_epochs)) + 1
    x = abs(t / phase.step_size_epochs - 2 * cycle + 1)
    return phase.base_lr + (phase.max_lr - phase.base_lr) * max(0.0, 1.0 - x) * 2.0 ** (1 - cycle)


def replay_schedule(epoch_frac, phases=None):
    """Learning rate at a (fractional) epoch of the fixed replay."""
    phases = phases or REPLAY_PHASES
    for phase in phases:
        if phase.start_epoch <= epoch_frac < phase.end_epoch:
            return clr_lr(epoch_frac, phase)
    if epoch_frac == phases[-1].end_epoch:
        return clr_lr(epoch_frac, phases[-1])
    raise ValueError(f"epoch {epoch_frac} outside the replay span")


def schedule_trace(phases=None, step=0.25):
    """(epoch_frac, lr) rows across the whole replay, for CSV export."""
    phases = phases or REPLAY_PHASES
    end = phases[-1].end_epoch
    rows = []
    t = 0.0
    while t < end - 1e-9:
        rows.append((t, replay_schedule(t, phases)))
        t += step
    return rows


def adaptive_escalation(history, current_phase, boost=10.0, drop=100.0,
                        escalation_cycles=1):
    """Range escalation: if the just-completed phase's best validation
    accuracy did not beat the phase before it, raise the lr range by
    `boost` for `escalation_cycles` cycles, then drop `drop` below that
    escalated range. Returns the list of phases to append (empty when
    the phase improved).

    history: best validation accuracy per completed phase, oldest first.
    """
    if len(history) < 1:
        raise ValueError("needs at least one completed phase")
    if len(history) >= 2 and history[-1] > history[-2]:
        return []
    if len(history) == 1:
        return []
    step = current_phase.step_size_epochs
    span = 2 * step * escalation_cycles
    start = current_phase.end_epoch
    escalated = CLRPhase(current_phase.base_lr * boost, current_phase.max_lr * boost,
                         step, start, start + span)
    lowered = CLRPhase(escalated.base_lr / drop, escalated.max_lr / drop,
                       step, start + span, start + 2 * span)
    return [escalated, lowered]


@dataclass
class PlateauState:
    patience: int = 5
    factor: float = 0.1
    min_lr: float = 1e-7
    min_delta: float = 1e-4
    best_val_loss: float = None
    epochs_since_improvement: int = 0

    def __post_init__(self):
        if not 0.0 < self.factor < 1.0:
            raise ValueError("factor must be in (0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    def step(self, val_loss, current_lr):
        """Feed one epoch's validation loss; returns the (possibly
        reduced) learning rate. Never raises the rate."""
        if self.best_val_loss is None:
            self.best_val_loss = val_loss
            self.epochs_since_improvement = 1
        elif val_loss < self.best_val_loss - self.min_delta:
            self.best_val_loss = val_loss
            self.epochs_since_improvement = 0
        else:
            self.epochs_since_improvement += 1
        if self.epochs_since_improvement >= self.patience:
            self.epochs_since_improvement = 0
            return max(current_lr * self.factor, self.min_lr)
        return current_lr
