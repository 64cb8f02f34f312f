from ipaddress import IPv4Address

from django.test import SimpleTestCase

from core.control import DefenseEventKind, DefensePolicy, Orchestrator
from core.detection import SuspicionVerdict
from core.engine import PacketArrival, Simulator
from core.honeyfarm import BackupPool, HoneyFarm, HoneyVmProfile, Interaction, trap_trigger
from core.network import Hop, Network
from core.packets import AttackType
from core.victim import Service

from .helpers import AGENT, FARM, SPOOFED, WEB, TraceCollector, make_packet, small_topology

Kind = DefenseEventKind


class OrchestratorTests(SimpleTestCase):
    def build(self, *, window=2000, farm_node='farm', pool_size=2):
        self.sim = Simulator()
        self.topology = small_topology(routers=2)
        self.observer = TraceCollector()
        self.network = Network(self.sim, self.topology, self.observer)
        self.orchestrator = Orchestrator(
            self.network, DefensePolicy(engagement_window_ms=window), farm_node=farm_node,
        )
        self.network.forwarder = self.orchestrator
        profile = HoneyVmProfile(Service.WEB, Interaction.HIGH, frozenset({AttackType.LAND}))
        self.farm = HoneyFarm(
            self.network, 'farm', FARM, BackupPool.build({Service.WEB: (profile, pool_size)}, 1000),
            enabled=True, services={WEB: Service.WEB}, control=self.orchestrator,
        )
        self.network.attach('farm', self.farm)
        self.orchestrator.farm = self.farm
        self.orchestrator.services = {WEB: Service.WEB}
        return self.orchestrator

    def kinds(self, events):
        return [event.kind for event in events]

    def blocked(self, source):
        return source in self.topology.firewalls['fw'].blocked_sources

    # -- verdicts ---------------------------------------------------------

    def test_confirmation_redirects_then_blocks_after_the_window(self):
        orchestrator = self.build()
        actions = orchestrator.on_verdict(SPOOFED, SuspicionVerdict.CONFIRMED, 'web', 100)
        self.assertEqual(self.kinds(actions), [Kind.CONFIRMED, Kind.REDIRECT_INSTALLED])
        self.assertEqual(sorted(actions[1].detail['routers']), ['r1', 'r2'])
        for router in ('r1', 'r2'):
            self.assertEqual(self.topology.routing[router].redirect_for(SPOOFED), 'farm')
        self.assertFalse(self.blocked(SPOOFED))

        self.sim.run_until(2099)
        self.assertFalse(self.blocked(SPOOFED))
        self.sim.run_until(2100)
        self.assertTrue(self.blocked(SPOOFED))
        last = orchestrator.events[-1]
        self.assertEqual((last.kind, last.time, last.detail['firewalls']), (Kind.BLOCK_INSTALLED, 2100, ['fw']))

    def test_benign_and_repeated_verdicts_do_nothing(self):
        orchestrator = self.build()
        self.assertEqual(orchestrator.on_verdict(SPOOFED, SuspicionVerdict.BENIGN, 'web', 0), [])
        orchestrator.on_verdict(SPOOFED, SuspicionVerdict.CONFIRMED, 'web', 0)
        self.assertEqual(orchestrator.on_verdict(SPOOFED, SuspicionVerdict.CONFIRMED, 'farm:Web', 5), [])
        self.assertEqual(len(orchestrator.events), 2)

    def test_zero_window_blocks_at_once(self):
        orchestrator = self.build(window=0)
        actions = orchestrator.on_verdict(SPOOFED, SuspicionVerdict.CONFIRMED, 'web', 40)
        self.assertEqual(self.kinds(actions), [Kind.CONFIRMED, Kind.REDIRECT_INSTALLED, Kind.BLOCK_INSTALLED])
        self.assertTrue(all(event.time == 40 for event in actions))
        self.assertTrue(self.blocked(SPOOFED))

    def test_without_a_farm_there_is_no_redirect(self):
        orchestrator = self.build(window=0, farm_node=None)
        actions = orchestrator.on_verdict(SPOOFED, SuspicionVerdict.CONFIRMED, 'web', 0)
        self.assertEqual(self.kinds(actions), [Kind.CONFIRMED, Kind.BLOCK_INSTALLED])
        self.assertIsNone(self.topology.routing['r1'].redirect_for(SPOOFED))

    def test_events_reach_the_trace(self):
        orchestrator = self.build(window=0)
        orchestrator.on_verdict(SPOOFED, SuspicionVerdict.CONFIRMED, 'web', 0)
        notes = self.observer.notes_of('defense')
        self.assertEqual([note['event'] for note in notes], ['Confirmed', 'RedirectInstalled', 'BlockInstalled'])
        self.assertEqual(notes[0]['source'], str(SPOOFED))

    # -- traps ----------------------------------------------------------------

    def spring_trap(self, now=50):
        vm = self.farm.pool.operational(Service.WEB)
        trap_trigger(vm, make_packet(src=WEB, dst=WEB), now)
        return vm

    def test_trap_fails_over_and_blocks_immediately(self):
        orchestrator = self.build()
        vm = self.spring_trap()
        actions = orchestrator.on_trap(vm, SPOOFED, 50)
        self.assertEqual(self.kinds(actions), [Kind.TRAP_TRIGGERED, Kind.FAILOVER_DONE, Kind.BLOCK_INSTALLED])
        self.assertTrue(all(event.time == 50 for event in actions))
        self.assertEqual(actions[0].detail['cause'], 'Land')
        self.assertEqual(actions[1].detail['activated'], 'web-vm02')

    def test_exhausted_pool_still_blocks(self):
        orchestrator = self.build(pool_size=1)
        actions = orchestrator.on_trap(self.spring_trap(), SPOOFED, 50)
        self.assertEqual(self.kinds(actions), [Kind.TRAP_TRIGGERED, Kind.BLOCK_INSTALLED])

    def test_already_blocked_source_is_not_blocked_twice(self):
        orchestrator = self.build()
        orchestrator.block(SPOOFED, 'web', 10)
        actions = orchestrator.on_trap(self.spring_trap(), SPOOFED, 50)
        self.assertEqual(self.kinds(actions), [Kind.TRAP_TRIGGERED, Kind.FAILOVER_DONE])

    def test_second_trap_by_the_same_source_adds_no_events(self):
        orchestrator = self.build(pool_size=3)
        orchestrator.on_trap(self.spring_trap(50), SPOOFED, 50)
        second = self.spring_trap(51)
        self.assertEqual(second.id, 'web-vm02')
        self.assertEqual(orchestrator.on_trap(second, SPOOFED, 51), [])
        self.assertEqual(
            self.kinds(orchestrator.events),
            [Kind.TRAP_TRIGGERED, Kind.FAILOVER_DONE, Kind.BLOCK_INSTALLED],
        )
        self.assertEqual(self.farm.pool.operational(Service.WEB).id, 'web-vm03')
        self.assertEqual(len(self.observer.notes_of('failover')), 2)

    def test_engagement_is_recorded_once_per_source(self):
        orchestrator = self.build()
        orchestrator.engagement_started(SPOOFED, 'web-vm01', 5)
        orchestrator.engagement_started(SPOOFED, 'web-vm01', 6)
        self.assertEqual(self.kinds(orchestrator.events), [Kind.ENGAGEMENT_STARTED])

    # -- forwarding -------------------------------------------------------------

    def step(self, node, pkt, **arrival):
        return self.orchestrator.pipeline_step(node, PacketArrival(node=node, packet=pkt, **arrival), 0)

    def test_firewall_drops_blocked_sources(self):
        self.build()
        self.orchestrator.block(SPOOFED, 'web', 0)
        self.assertEqual(self.step('fw', make_packet(src=SPOOFED), ingress=True), Hop.drop('firewall'))
        self.assertEqual(self.step('fw', make_packet(), ingress=True), Hop('r1'))
        self.assertEqual(self.topology.firewalls['fw'].drops, 1)

    def test_redirected_source_is_steered_to_the_farm(self):
        self.build()
        self.topology.install_redirect('r1', SPOOFED, 'farm')
        self.assertEqual(self.step('r1', make_packet(src=SPOOFED), ingress=True), Hop('farm', steer='farm'))
        self.assertEqual(self.step('r2', make_packet(src=SPOOFED), steer='farm'), Hop('r1', steer='farm'))

    def test_ingress_traffic_is_mirrored_once(self):
        self.build()
        self.assertEqual(self.step('r1', make_packet(), ingress=True), Hop('web', mirrored=True))
        self.assertEqual(self.step('r1', make_packet(), ingress=True, mirrored=True), Hop('web', mirrored=True))
        self.assertEqual(self.step('r1', make_packet(src=WEB, dst=IPv4Address('198.51.100.1'))), Hop('fw'))

    def test_unknown_destination(self):
        self.build()
        self.assertEqual(self.step('r1', make_packet(dst=IPv4Address('8.8.8.8'))), Hop.drop('noroute'))

    def test_confirmed_attacker_ends_up_at_the_farm_then_at_the_firewall(self):
        orchestrator = self.build(window=1000)
        orchestrator.on_verdict(SPOOFED, SuspicionVerdict.CONFIRMED, 'web', 0)
        self.network.emit('a1', make_packet(src=SPOOFED, actual=AGENT))
        self.sim.run_until(500)
        self.assertEqual([node for node, _, _ in self.observer.deliveries], ['farm'])

        self.sim.run_until(1000)
        self.network.emit('a1', make_packet(src=SPOOFED, actual=AGENT))
        self.sim.run_until(1500)
        self.assertEqual(self.observer.drop_reasons()[-1], 'firewall')
