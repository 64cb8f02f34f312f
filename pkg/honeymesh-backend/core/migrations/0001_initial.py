from django.db import migrations, models


class Migration(migrations.Migration):
    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='SimulationRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=200)),
                ('seed', models.CharField(max_length=20)),
                ('config_digest', models.CharField(db_index=True, max_length=64)),
                ('duration_ms', models.PositiveBigIntegerField()),
                ('farm_enabled', models.BooleanField(default=True)),
                ('honeyd_enabled', models.BooleanField(default=True)),
                ('legit_success_rate', models.FloatField()),
                ('production_crashes', models.PositiveIntegerField(default=0)),
                ('report', models.JSONField(default=dict)),
                ('trace_path', models.CharField(blank=True, max_length=500)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'verbose_name': 'Simulation run',
                'verbose_name_plural': 'Simulation runs',
                'ordering': ['-created_at'],
            },
        ),
    ]
